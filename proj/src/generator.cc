#include "crskit/generator.h"

#include <cctype>

#include "crskit/error.h"
#include "crskit/monitor.h"

namespace crskit {
namespace {

bool is_ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

// Visits every "{identifier}" slot: fn(offset, identifier).
template <typename Fn>
void for_each_slot(std::string_view text, Fn&& fn) {
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '{') continue;
    std::size_t j = i + 1;
    while (j < text.size() && is_ident_char(text[j])) ++j;
    if (j > i + 1 && j < text.size() && text[j] == '}') {
      fn(i, text.substr(i + 1, j - i - 1));
      i = j;
    }
  }
}

std::string join(const std::vector<std::string>& items, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

std::vector<std::string> kwarg_items(const Json& kwargs) {
  std::vector<std::string> items;
  if (!kwargs.is_object() || !kwargs.contains("items")) return items;
  const auto& v = kwargs["items"];
  if (!v.is_array()) fail(ErrorCode::kInvalidArgument, "kwarg items must be a list of names");
  for (const auto& x : v) {
    if (!x.is_string()) fail(ErrorCode::kInvalidArgument, "kwarg items must be a list of names");
    items.push_back(x.get<std::string>());
  }
  return items;
}

// Word-sized chunks ("You ", "might ", ...) whose concatenation is `text`.
void stream_words(const std::string& text, const CallContext& ctx) {
  std::size_t start = 0;
  while (start < text.size()) {
    if (ctx.cancelled()) fail(ErrorCode::kCancelled, "generation cancelled");
    auto sp = text.find(' ', start);
    std::size_t end = sp == std::string::npos ? text.size() : sp + 1;
    ctx.emit({text.substr(start, end - start), false});
    start = end;
  }
  if (ctx.cancelled()) fail(ErrorCode::kCancelled, "generation cancelled");
  ctx.emit({"", true});
}

ModuleConfig make_config(const LlmGeneratorConfig& cfg) {
  return ModuleConfig{std::string(kLlmGeneratorType), "1", cfg.to_json()};
}

}  // namespace

const char* const kDefaultExpansionPrompt =
    "You are a movie recommender chatting with a user. The conversation so far, turns "
    "separated by <sep>, with movie mentions in <entity> tags:\n{context}\n\n"
    "Write the next System turn. Recommend these movies, spelling each title exactly as "
    "given: {items}\nReply with the response text only.";

const char* const kDefaultFillblankPrompt =
    "You are a movie recommender chatting with a user. The conversation so far, turns "
    "separated by <sep>, with movie mentions in <entity> tags:\n{context}\n\n"
    "Write the next System turn. Wherever you would name a movie, write <item> instead "
    "of the title. Reply with the response text only.";

PromptTemplate::PromptTemplate(std::string text) : text_(std::move(text)) {
  int context = 0;
  int items = 0;
  for_each_slot(text_, [&](std::size_t, std::string_view id) {
    if (id == "context") {
      ++context;
    } else if (id == "items") {
      ++items;
    } else {
      fail(ErrorCode::kInvalidTemplate, "unknown slot {" + std::string(id) + "}");
    }
  });
  if (context > 1 || items > 1) {
    fail(ErrorCode::kInvalidTemplate, "slots may appear at most once");
  }
}

std::string render_prompt(const PromptTemplate& t, const Dialog& d,
                          const std::vector<std::string>& items) {
  const std::string& text = t.text();
  std::string out;
  std::size_t last = 0;
  for_each_slot(text, [&](std::size_t at, std::string_view id) {
    out.append(text, last, at - last);
    out += id == "context" ? render_dialog(d) : join(items, "; ");
    last = at + id.size() + 2;
  });
  out.append(text, last, std::string::npos);
  return out;
}

std::string_view to_string(GenStyle style) {
  return style == GenStyle::kExpansion ? "expansion" : "fillblank";
}

GenStyle parse_gen_style(std::string_view s) {
  if (s == "expansion") return GenStyle::kExpansion;
  if (s == "fillblank") return GenStyle::kFillblank;
  fail(ErrorCode::kInvalidConfig, "unknown generator style \"" + std::string(s) + "\"");
}

std::string template_generate(const std::vector<std::string>& items, GenStyle style,
                              std::size_t slots, std::string_view placeholder) {
  if (style == GenStyle::kExpansion) {
    if (items.empty()) return "Tell me more about what you like.";
    return "You might enjoy " + join(items, ", ") + ".";
  }
  if (slots == 0) return "Tell me more about what you like.";
  std::string out;
  for (std::size_t i = 0; i < slots; ++i) {
    if (i) out += ' ';
    out += "I recommend ";
    out += placeholder;
    out += '.';
  }
  return out;
}

Json LlmGeneratorConfig::to_json() const {
  return Json{{"style", std::string(to_string(style))},
              {"prompt", prompt},
              {"placeholder", placeholder},
              {"slots", slots},
              {"offline", offline},
              {"endpoint", endpoint.to_json()}};
}

LlmGeneratorConfig LlmGeneratorConfig::from_json(const Json& params) {
  LlmGeneratorConfig c;
  try {
    c.style = parse_gen_style(params.value("style", std::string("expansion")));
    c.prompt = params.value("prompt", c.prompt);
    c.placeholder = params.value("placeholder", c.placeholder);
    c.slots = params.value("slots", c.slots);
    c.offline = params.value("offline", c.offline);
    if (params.contains("endpoint")) c.endpoint = LlmEndpointConfig::from_json(params["endpoint"]);
  } catch (const Json::exception& e) {
    fail(ErrorCode::kInvalidConfig, std::string("generator params: ") + e.what());
  }
  if (c.placeholder.empty() || contains_reserved_token(c.placeholder)) {
    fail(ErrorCode::kInvalidConfig, "placeholder must be non-empty and free of reserved tokens");
  }
  return c;
}

LlmGenerator::LlmGenerator(std::string name, LlmGeneratorConfig cfg, bool force_offline)
    : Module(std::move(name), make_config(cfg)),
      cfg_(std::move(cfg)),
      offline_(cfg_.offline || force_offline),
      prompt_(cfg_.prompt.empty() ? (cfg_.style == GenStyle::kExpansion ? kDefaultExpansionPrompt
                                                                         : kDefaultFillblankPrompt)
                                  : cfg_.prompt) {
  cfg_.endpoint.validate();
}

ModuleOutput LlmGenerator::response(const Dialog& dialog, const Json& kwargs,
                                    const CallContext& ctx) const {
  auto items = kwarg_items(kwargs);
  auto slots = kwarg_int(kwargs, "slots");
  std::size_t n_slots = slots ? static_cast<std::size_t>(std::max<std::int64_t>(*slots, 0))
                              : cfg_.slots;

  if (offline_) {
    auto placeholder = kwarg_string(kwargs, "placeholder").value_or(cfg_.placeholder);
    auto text = monitor::monitored(
        "gen.template_generate", join(items, "; "),
        [&] { return template_generate(items, cfg_.style, n_slots, placeholder); },
        [](const std::string& s) { return s; });
    stream_words(text, ctx);
    return ModuleOutput(std::move(text));
  }

  auto prompt = monitor::monitored(
      "gen.render_prompt", join(items, "; "), [&] { return render_prompt(prompt_, dialog, items); },
      [](const std::string& s) { return s; });
  GenerateOverrides overrides{kwarg_string(kwargs, "model"), kwarg_double(kwargs, "temperature")};
  auto text = monitor::monitored(
      "gen.generate", prompt, [&] { return generate(cfg_.endpoint, prompt, overrides, ctx); },
      [](const std::string& s) { return s; });
  return ModuleOutput(std::move(text));
}

}  // namespace crskit
