#pragma once

// Text wire format exchanged between modules and pipelines:
//
//   dialog := utt ("<sep>" utt)*
//   utt    := ("User" | "System") ": " body
//   body   := (plain | "<entity>" name "</entity>")*
//
// Parsing is loss-free: render_dialog(parse_dialog(w)) == w for every accepted w.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace crskit {

inline constexpr std::string_view kSepToken = "<sep>";
inline constexpr std::string_view kEntityOpen = "<entity>";
inline constexpr std::string_view kEntityClose = "</entity>";

enum class Role { kUser, kSystem };

std::string_view to_string(Role role);

// Offsets are byte offsets into the UTF-8 clean text.
struct EntitySpan {
  std::string surface;
  std::size_t start = 0;
  std::size_t end = 0;
  std::optional<std::int64_t> entity_id;

  bool operator==(const EntitySpan&) const = default;
};

struct Utterance {
  Role role = Role::kUser;
  std::string text;
  std::vector<EntitySpan> spans;

  bool operator==(const Utterance&) const = default;
};

struct Dialog {
  std::vector<Utterance> utterances;

  bool operator==(const Dialog&) const = default;
};

// True when `text` contains any of "<sep>", "<entity>", "</entity>".
bool contains_reserved_token(std::string_view text);

// Removes every occurrence of the reserved tokens.
std::string strip_reserved_tokens(std::string_view text);

// Throws kReservedToken / kEmptyEntity / kInvalidArgument when the utterance
// breaks an invariant (markup in text, overlapping or out-of-range spans,
// surface not equal to the covered substring).
void validate_utterance(const Utterance& u);

Dialog parse_dialog(std::string_view wire);
std::string render_dialog(const Dialog& d);

// Single-turn helpers. parse_body accepts the part after "Role: ".
Utterance parse_body(Role role, std::string_view body);
std::string render_body(const Utterance& u);
std::string render_utterance(const Utterance& u);

Dialog append_utterance(const Dialog& d, Utterance u);

// Last User turn, or nullptr.
const Utterance* last_user_turn(const Dialog& d);

}  // namespace crskit
