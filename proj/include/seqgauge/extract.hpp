#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "seqgauge/util.hpp"

namespace seqgauge {

struct ExtractDiagnostics {
  int scanned = 0;  // non-blank lines (opcodes) or records (API logs)
  int skipped = 0;  // entries that yielded no token
};

struct ExtractResult {
  std::vector<std::string> tokens;
  ExtractDiagnostics diagnostics;
};

struct OpcodeGrammar {
  // When set, only these mnemonics are accepted; anything else skips the line.
  std::optional<std::unordered_set<std::string>> mnemonic_allowlist;
};

namespace detail {

// Assembler keywords that occupy the mnemonic slot on non-instruction lines.
inline const std::unordered_set<std::string>& directive_words() {
  static const std::unordered_set<std::string> kWords = {
      "proc",    "endp",   "db",     "dd",      "dw",    "dq",   "dt",
      "align",   "segment", "ends",  "assume",  "public", "extrn",
      "extern",  "include", "struc", "end",     "equ",    "org",
      "model",   "unicode"};
  return kWords;
}

// Mnemonics are a letter followed by letters/digits (after case-folding).
inline bool mnemonic_shaped(std::string_view tok) {
  if (tok.empty()) return false;
  if (!(tok[0] >= 'a' && tok[0] <= 'z')) return false;
  for (char c : tok)
    if (!((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9'))) return false;
  return true;
}

// The address field of a listing line, e.g. ".text:00401017" or "00401017:".
inline bool address_field(std::string_view tok) {
  return tok.find(':') != std::string_view::npos;
}

}  // namespace detail

// Pulls the mnemonic opcode out of each instruction line of a disassembly
// listing, in order, lower-cased. Operands, labels, directives, section
// prefixes and blank lines are discarded; lines that carry no instruction are
// counted in the diagnostics tally. Also accepts already-extracted text with
// one bare mnemonic per line, so extraction is idempotent.
inline ExtractResult extract_opcodes(std::string_view text,
                                     const OpcodeGrammar& grammar = {}) {
  ExtractResult out;
  for (std::string_view raw_line : split_on(text, '\n')) {
    std::string_view line = raw_line;
    if (size_t sc = line.find(';'); sc != std::string_view::npos)
      line = line.substr(0, sc);
    auto toks = split_ws(line);
    if (toks.empty()) continue;
    ++out.diagnostics.scanned;

    size_t idx = 0;
    if (detail::address_field(toks[0])) {
      ++idx;
      // an optional label between the address and the mnemonic
      if (idx < toks.size() && toks[idx].back() == ':') ++idx;
    } else if (toks.size() != 1) {
      ++out.diagnostics.skipped;
      continue;
    }
    if (idx >= toks.size()) {
      ++out.diagnostics.skipped;
      continue;
    }
    std::string mnemonic = to_lower(toks[idx]);
    if (!detail::mnemonic_shaped(mnemonic) ||
        detail::directive_words().contains(mnemonic) ||
        (grammar.mnemonic_allowlist &&
         !grammar.mnemonic_allowlist->contains(mnemonic))) {
      ++out.diagnostics.skipped;
      continue;
    }
    out.tokens.push_back(std::move(mnemonic));
  }
  return out;
}

namespace detail {

inline bool identifier_start(char c) {
  return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_';
}

inline bool identifier_char(char c) {
  return identifier_start(c) || (c >= '0' && c <= '9');
}

// Splits a log line into records on commas outside parentheses, brackets and
// double quotes, so argument lists stay attached to their call.
inline std::vector<std::string_view> split_records(std::string_view line) {
  std::vector<std::string_view> out;
  int depth = 0;
  bool quoted = false;
  size_t start = 0;
  for (size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || (line[i] == ',' && depth == 0 && !quoted)) {
      out.push_back(line.substr(start, i - start));
      start = i + 1;
      continue;
    }
    char c = line[i];
    if (quoted) {
      if (c == '\\')
        ++i;
      else if (c == '"')
        quoted = false;
    } else if (c == '"') {
      quoted = true;
    } else if (c == '(' || c == '[') {
      ++depth;
    } else if ((c == ')' || c == ']') && depth > 0) {
      --depth;
    }
  }
  return out;
}

}  // namespace detail

// Collects API call names from a log, dropping arguments and return values.
// A record is one call: records are separated by newlines or by commas that
// sit outside parentheses/quotes, and each record must begin with the call
// name (an identifier). Names keep their case; repeats are preserved.
inline ExtractResult extract_api_calls(std::string_view text) {
  ExtractResult out;
  for (std::string_view line : split_on(text, '\n')) {
    for (std::string_view record : detail::split_records(line)) {
      std::string_view r = trim(record);
      if (r.empty()) continue;
      ++out.diagnostics.scanned;
      if (!detail::identifier_start(r[0])) {
        ++out.diagnostics.skipped;
        continue;
      }
      size_t end = 1;
      while (end < r.size() && detail::identifier_char(r[end])) ++end;
      out.tokens.emplace_back(r.substr(0, end));
    }
  }
  return out;
}

}  // namespace seqgauge
