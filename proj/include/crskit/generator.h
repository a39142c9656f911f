#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "crskit/llm_client.h"
#include "crskit/module.h"

namespace crskit {

// Prompt text with optional "{context}" and "{items}" slots, each at most
// once. Any other "{identifier}" is rejected with kInvalidTemplate; braces
// not enclosing an identifier are literal.
class PromptTemplate {
 public:
  explicit PromptTemplate(std::string text);

  const std::string& text() const { return text_; }

 private:
  std::string text_;
};

// "{context}" -> render_dialog(d), "{items}" -> names joined by "; ".
std::string render_prompt(const PromptTemplate& t, const Dialog& d,
                          const std::vector<std::string>& items);

enum class GenStyle { kExpansion, kFillblank };

std::string_view to_string(GenStyle style);
GenStyle parse_gen_style(std::string_view s);

// Deterministic offline text.
//   expansion: "You might enjoy A, B." or "Tell me more about what you like."
//   fillblank: "I recommend <item>." once per slot, space separated; zero
//              slots gives the empty-list expansion sentence.
std::string template_generate(const std::vector<std::string>& items, GenStyle style,
                              std::size_t slots = 0, std::string_view placeholder = "<item>");

inline constexpr std::string_view kLlmGeneratorType = "chatgpt-gen";

extern const char* const kDefaultExpansionPrompt;
extern const char* const kDefaultFillblankPrompt;

struct LlmGeneratorConfig {
  GenStyle style = GenStyle::kExpansion;
  std::string prompt;  // empty selects the style's default prompt
  std::string placeholder = "<item>";
  std::size_t slots = 3;  // fillblank slots in offline mode
  bool offline = false;
  LlmEndpointConfig endpoint;

  Json to_json() const;
  static LlmGeneratorConfig from_json(const Json& params);
};

// Prompted chat-completion generator; in offline mode the template
// generator stands in for the remote endpoint.
//
// response kwargs: "items" (names to mention), "slots" and "placeholder"
// (offline fillblank), "model", "temperature".
class LlmGenerator : public Module {
 public:
  // force_offline switches to the template generator without touching the
  // persisted config.
  LlmGenerator(std::string name, LlmGeneratorConfig cfg, bool force_offline = false);

  ModuleKind kind() const override { return ModuleKind::kGenerator; }

  ModuleOutput response(const Dialog& dialog, const Json& kwargs,
                        const CallContext& ctx) const override;
  using Module::response;

  const LlmGeneratorConfig& generator_config() const { return cfg_; }
  const PromptTemplate& prompt() const { return prompt_; }
  bool offline() const { return offline_; }

 private:
  LlmGeneratorConfig cfg_;
  bool offline_;
  PromptTemplate prompt_;
};

}  // namespace crskit
