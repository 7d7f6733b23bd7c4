#include "svg/json_repair.hpp"

#include <cctype>

namespace svg::jsonrepair {

namespace {

bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

// Balanced {...} span beginning at `start`, honouring both quote styles.
std::optional<std::string_view> balanced_span(std::string_view text, std::size_t start) {
  int depth = 0;
  char quote = 0;
  bool escape = false;
  for (std::size_t i = start; i < text.size(); ++i) {
    const char c = text[i];
    if (quote != 0) {
      if (escape) {
        escape = false;
      } else if (c == '\\') {
        escape = true;
      } else if (c == quote) {
        quote = 0;
      }
      continue;
    }
    if (c == '"' || c == '\'') {
      // An apostrophe inside a bare word ("it's") is not a quote.
      if (c == '\'' && i > 0 && is_word_char(text[i - 1])) continue;
      quote = c;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return text.substr(start, i - start + 1);
    }
  }
  return std::nullopt;
}

std::optional<nlohmann::json> try_parse(std::string_view text) {
  auto parsed = nlohmann::json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (parsed.is_discarded() || !parsed.is_object()) return std::nullopt;
  return parsed;
}

}  // namespace

std::string repair(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  char quote = 0;
  bool escape = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quote != 0) {
      if (escape) {
        escape = false;
        // \' is meaningless in JSON
        if (c == '\'') {
          out.back() = '\'';
          continue;
        }
        out.push_back(c);
        continue;
      }
      if (c == '\\') {
        escape = true;
        out.push_back(c);
        continue;
      }
      if (c == quote) {
        quote = 0;
        out.push_back('"');
        continue;
      }
      if (c == '"' && quote == '\'') {
        out += "\\\"";
        continue;
      }
      out.push_back(c);
      continue;
    }
    if (c == '"' || c == '\'') {
      quote = c;
      out.push_back('"');
      continue;
    }
    if (c == ',') {
      std::size_t j = i + 1;
      while (j < text.size() && std::isspace(static_cast<unsigned char>(text[j]))) ++j;
      if (j < text.size() && (text[j] == '}' || text[j] == ']')) continue;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) && (i == 0 || !is_word_char(text[i - 1]))) {
      std::size_t j = i;
      while (j < text.size() && is_word_char(text[j])) ++j;
      const std::string_view word = text.substr(i, j - i);
      if (word == "True" || word == "False" || word == "None") {
        out += word == "True" ? "true" : word == "False" ? "false" : "null";
        i = j - 1;
        continue;
      }
    }
    out.push_back(c);
  }
  return out;
}

std::optional<nlohmann::json> find_object(std::string_view text,
                                          std::vector<Diagnostic>& diagnostics) {
  for (std::size_t pos = text.find('{'); pos != std::string_view::npos;
       pos = text.find('{', pos + 1)) {
    const auto span = balanced_span(text, pos);
    if (!span) continue;
    if (auto parsed = try_parse(*span)) return parsed;
    if (auto parsed = try_parse(repair(*span))) {
      diagnostics.push_back(Diagnostic{"json_repaired",
                                       "object literal needed quote/literal/comma repair", 0});
      return parsed;
    }
  }
  return std::nullopt;
}

}  // namespace svg::jsonrepair
