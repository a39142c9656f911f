#include "crskit/protocol.h"

#include <algorithm>
#include <array>
#include <cctype>

#include "crskit/error.h"

namespace crskit {
namespace {

constexpr std::array<std::string_view, 3> kReserved = {kSepToken, kEntityOpen,
                                                       kEntityClose};

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::isspace(c); });
}

}  // namespace

std::string_view to_string(Role role) {
  return role == Role::kUser ? "User" : "System";
}

bool contains_reserved_token(std::string_view text) {
  for (auto token : kReserved) {
    if (text.find(token) != std::string_view::npos) return true;
  }
  return false;
}

std::string strip_reserved_tokens(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    bool skipped = false;
    for (auto token : kReserved) {
      if (text.substr(i, token.size()) == token) {
        i += token.size();
        skipped = true;
        break;
      }
    }
    if (!skipped) out.push_back(text[i++]);
  }
  return out;
}

void validate_utterance(const Utterance& u) {
  if (contains_reserved_token(u.text)) {
    fail(ErrorCode::kReservedToken, "utterance text contains a reserved token");
  }
  std::size_t prev_end = 0;
  for (const auto& span : u.spans) {
    if (span.start >= span.end) {
      fail(ErrorCode::kEmptyEntity, "span is empty");
    }
    if (span.end > u.text.size() || span.start < prev_end) {
      fail(ErrorCode::kInvalidArgument, "spans out of range or overlapping");
    }
    if (std::string_view(u.text).substr(span.start, span.end - span.start) !=
        span.surface) {
      fail(ErrorCode::kInvalidArgument,
           "span surface does not match text: " + span.surface);
    }
    prev_end = span.end;
  }
}

Utterance parse_body(Role role, std::string_view body) {
  Utterance u;
  u.role = role;
  u.text.reserve(body.size());

  std::size_t i = 0;
  bool open = false;
  std::size_t span_start = 0;
  while (i < body.size()) {
    if (body[i] != '<') {
      u.text.push_back(body[i++]);
      continue;
    }
    auto rest = body.substr(i);
    if (rest.starts_with(kEntityOpen)) {
      if (open) fail(ErrorCode::kNestedEntityTag, "nested <entity> tag");
      open = true;
      span_start = u.text.size();
      i += kEntityOpen.size();
    } else if (rest.starts_with(kEntityClose)) {
      if (!open) fail(ErrorCode::kUnbalancedEntityTag, "</entity> without <entity>");
      open = false;
      if (u.text.size() == span_start) {
        fail(ErrorCode::kEmptyEntity, "empty <entity></entity>");
      }
      u.spans.push_back(EntitySpan{u.text.substr(span_start), span_start,
                                   u.text.size(), std::nullopt});
      i += kEntityClose.size();
    } else if (rest.starts_with(kSepToken)) {
      fail(ErrorCode::kReservedToken, "<sep> inside an utterance body");
    } else {
      u.text.push_back(body[i++]);
    }
  }
  if (open) fail(ErrorCode::kUnbalancedEntityTag, "unclosed <entity> tag");
  return u;
}

Dialog parse_dialog(std::string_view wire) {
  if (is_blank(wire)) fail(ErrorCode::kEmptyDialog, "empty dialog");

  Dialog d;
  std::size_t pos = 0;
  while (true) {
    auto sep = wire.find(kSepToken, pos);
    auto turn = wire.substr(pos, sep == std::string_view::npos ? wire.npos : sep - pos);

    Role role;
    std::string_view body;
    if (turn.starts_with("User: ")) {
      role = Role::kUser;
      body = turn.substr(6);
    } else if (turn.starts_with("System: ")) {
      role = Role::kSystem;
      body = turn.substr(8);
    } else {
      fail(ErrorCode::kBadRole,
           "turn must start with \"User: \" or \"System: \": " +
               std::string(turn.substr(0, 32)));
    }
    d.utterances.push_back(parse_body(role, body));

    if (sep == std::string_view::npos) break;
    pos = sep + kSepToken.size();
  }
  return d;
}

std::string render_body(const Utterance& u) {
  std::string out;
  out.reserve(u.text.size() + u.spans.size() * 17);
  std::size_t cursor = 0;
  for (const auto& span : u.spans) {
    out.append(u.text, cursor, span.start - cursor);
    out.append(kEntityOpen);
    out.append(u.text, span.start, span.end - span.start);
    out.append(kEntityClose);
    cursor = span.end;
  }
  out.append(u.text, cursor);
  return out;
}

std::string render_utterance(const Utterance& u) {
  std::string out(to_string(u.role));
  out += ": ";
  out += render_body(u);
  return out;
}

std::string render_dialog(const Dialog& d) {
  std::string out;
  for (std::size_t i = 0; i < d.utterances.size(); ++i) {
    if (i > 0) out.append(kSepToken);
    out += render_utterance(d.utterances[i]);
  }
  return out;
}

Dialog append_utterance(const Dialog& d, Utterance u) {
  Dialog out = d;
  out.utterances.push_back(std::move(u));
  return out;
}

const Utterance* last_user_turn(const Dialog& d) {
  for (auto it = d.utterances.rbegin(); it != d.utterances.rend(); ++it) {
    if (it->role == Role::kUser) return &*it;
  }
  return nullptr;
}

}  // namespace crskit
