#pragma once

#include <cctype>
#include <climits>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mecheval/core/error.hpp"
#include "mecheval/runtime/model.hpp"

namespace mecheval {

class Tokenizer {
 public:
  virtual ~Tokenizer() = default;

  virtual TokenSequence encode(std::string_view text) const = 0;
  virtual std::string decode(std::span<const TokenId> ids) const = 0;
  virtual std::size_t vocab_size() const = 0;
  virtual std::optional<TokenId> end_of_text() const = 0;
  virtual std::string token_text(TokenId id) const = 0;
};

// Closed whitespace-delimited vocabulary. Parentheses and commas are split
// off words so "(website TEXT)" becomes "(", "website", "TEXT", ")".
// decode() re-attaches them, so canonical text round-trips exactly.
class FixtureTokenizer final : public Tokenizer {
 public:
  static constexpr std::string_view kEndOfText = "<eos>";

  explicit FixtureTokenizer(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      require(!tokens_[i].empty(), ErrorKind::kInput, "empty token in fixture vocabulary");
      const bool fresh = ids_.emplace(tokens_[i], static_cast<TokenId>(i)).second;
      require(fresh, ErrorKind::kInput, "duplicate token '" + tokens_[i] + "' in fixture vocabulary");
    }
  }

  static FixtureTokenizer load(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), ErrorKind::kModelLoad, "cannot open vocabulary " + path);
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      tokens.push_back(line);
    }
    return FixtureTokenizer(std::move(tokens));
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    require(out.good(), ErrorKind::kInput, "cannot write vocabulary " + path);
    for (const auto& t : tokens_) out << t << "\n";
  }

  TokenSequence encode(std::string_view text) const override {
    TokenSequence ids;
    for (const std::string& piece : split(text)) {
      auto it = ids_.find(piece);
      require(it != ids_.end(), ErrorKind::kInput, "out-of-vocabulary word '" + piece + "'");
      ids.push_back(it->second);
    }
    return ids;
  }

  std::string decode(std::span<const TokenId> ids) const override {
    std::string out;
    bool glue_next = true;
    for (TokenId id : ids) {
      const std::string& t = token_text_ref(id);
      const bool closes = (t == ")" || t == ",");
      if (!glue_next && !closes) out.push_back(' ');
      out += t;
      glue_next = (t == "(");
    }
    return out;
  }

  std::size_t vocab_size() const override { return tokens_.size(); }

  std::optional<TokenId> end_of_text() const override { return find(std::string(kEndOfText)); }

  std::string token_text(TokenId id) const override { return token_text_ref(id); }

  std::optional<TokenId> find(const std::string& word) const {
    auto it = ids_.find(word);
    if (it == ids_.end()) return std::nullopt;
    return it->second;
  }

  TokenId id(const std::string& word) const {
    auto found = find(word);
    require(found.has_value(), ErrorKind::kInput, "out-of-vocabulary word '" + word + "'");
    return *found;
  }

  const std::vector<std::string>& tokens() const { return tokens_; }

  static std::vector<std::string> split(std::string_view text) {
    std::vector<std::string> pieces;
    std::size_t i = 0;
    while (i < text.size()) {
      while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
      std::size_t j = i;
      while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
      std::string_view chunk = text.substr(i, j - i);
      i = j;
      while (!chunk.empty() && chunk.front() == '(') {
        pieces.emplace_back("(");
        chunk.remove_prefix(1);
      }
      std::vector<std::string> tail;
      while (!chunk.empty() && (chunk.back() == ')' || chunk.back() == ',')) {
        tail.emplace_back(1, chunk.back());
        chunk.remove_suffix(1);
      }
      if (!chunk.empty()) pieces.emplace_back(chunk);
      pieces.insert(pieces.end(), tail.rbegin(), tail.rend());
    }
    return pieces;
  }

 private:
  const std::string& token_text_ref(TokenId id) const {
    require(id >= 0 && static_cast<std::size_t>(id) < tokens_.size(), ErrorKind::kInput,
            "token id " + std::to_string(id) + " out of range");
    return tokens_[static_cast<std::size_t>(id)];
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
};

// GPT-2 style byte-level BPE (vocab.json + merges.txt).
class BpeTokenizer final : public Tokenizer {
 public:
  static constexpr std::string_view kEndOfText = "<|endoftext|>";

  BpeTokenizer(std::map<std::string, TokenId> vocab, std::vector<std::pair<std::string, std::string>> merges)
      : vocab_(std::move(vocab)) {
    for (const auto& [text, id] : vocab_) {
      require(id >= 0, ErrorKind::kInput, "negative id in BPE vocabulary");
      if (static_cast<std::size_t>(id) >= id_to_token_.size()) id_to_token_.resize(id + 1);
      id_to_token_[id] = text;
    }
    for (std::size_t r = 0; r < merges.size(); ++r)
      ranks_.emplace(merges[r].first + '\x01' + merges[r].second, r);
    build_byte_tables();
  }

  static BpeTokenizer load(const std::string& vocab_path, const std::string& merges_path) {
    std::ifstream vin(vocab_path);
    require(vin.good(), ErrorKind::kModelLoad, "cannot open BPE vocabulary " + vocab_path);
    nlohmann::json j;
    try {
      vin >> j;
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::kModelLoad, "cannot parse " + vocab_path + ": " + e.what());
    }
    std::map<std::string, TokenId> vocab;
    for (const auto& [k, v] : j.items()) vocab[k] = v.get<TokenId>();

    std::ifstream min(merges_path);
    require(min.good(), ErrorKind::kModelLoad, "cannot open BPE merges " + merges_path);
    std::vector<std::pair<std::string, std::string>> merges;
    std::string line;
    while (std::getline(min, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line.rfind("#version", 0) == 0) continue;
      const auto space = line.find(' ');
      require(space != std::string::npos, ErrorKind::kModelLoad, "malformed merge line '" + line + "'");
      merges.emplace_back(line.substr(0, space), line.substr(space + 1));
    }
    return BpeTokenizer(std::move(vocab), std::move(merges));
  }

  TokenSequence encode(std::string_view text) const override {
    TokenSequence ids;
    for (const std::string& piece : pretokenize(text)) {
      std::string mapped;
      for (unsigned char byte : piece) mapped += byte_to_unicode_[byte];
      for (const std::string& symbol : bpe(mapped)) {
        auto it = vocab_.find(symbol);
        require(it != vocab_.end(), ErrorKind::kInput, "BPE symbol missing from vocabulary");
        ids.push_back(it->second);
      }
    }
    return ids;
  }

  std::string decode(std::span<const TokenId> ids) const override {
    std::string mapped;
    for (TokenId id : ids) mapped += token_text(id);
    std::string out;
    std::size_t i = 0;
    while (i < mapped.size()) {
      const std::size_t len = utf8_length(static_cast<unsigned char>(mapped[i]));
      auto it = unicode_to_byte_.find(mapped.substr(i, len));
      require(it != unicode_to_byte_.end(), ErrorKind::kInput, "undecodable BPE symbol");
      out.push_back(static_cast<char>(it->second));
      i += len;
    }
    return out;
  }

  std::size_t vocab_size() const override { return id_to_token_.size(); }

  std::optional<TokenId> end_of_text() const override {
    auto it = vocab_.find(std::string(kEndOfText));
    if (it == vocab_.end()) return std::nullopt;
    return it->second;
  }

  std::string token_text(TokenId id) const override {
    require(id >= 0 && static_cast<std::size_t>(id) < id_to_token_.size(), ErrorKind::kInput,
            "token id " + std::to_string(id) + " out of range");
    return id_to_token_[static_cast<std::size_t>(id)];
  }

  // Splits text the way the GPT-2 pattern does:
  //   's|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+
  // Bytes >= 0x80 are classed as letters.
  static std::vector<std::string> pretokenize(std::string_view text) {
    auto cls = [](unsigned char c) {
      if (c >= 0x80 || std::isalpha(c)) return 'L';
      if (std::isdigit(c)) return 'N';
      if (std::isspace(c)) return 'S';
      return 'O';
    };
    std::vector<std::string> out;
    const std::size_t n = text.size();
    std::size_t i = 0;
    while (i < n) {
      const unsigned char c = static_cast<unsigned char>(text[i]);
      if (c == '\'') {
        bool matched = false;
        for (std::string_view suffix : {"re", "ve", "ll", "s", "t", "m", "d"}) {
          if (text.substr(i + 1, suffix.size()) == suffix) {
            out.emplace_back(text.substr(i, suffix.size() + 1));
            i += suffix.size() + 1;
            matched = true;
            break;
          }
        }
        if (matched) continue;
      }
      std::size_t start = i;
      std::size_t j = i;
      if (c == ' ' && j + 1 < n && cls(static_cast<unsigned char>(text[j + 1])) != 'S') ++j;
      const char kind = cls(static_cast<unsigned char>(text[j]));
      if (kind != 'S') {
        while (j < n && cls(static_cast<unsigned char>(text[j])) == kind) ++j;
        out.emplace_back(text.substr(start, j - start));
        i = j;
        continue;
      }
      while (j < n && cls(static_cast<unsigned char>(text[j])) == 'S') ++j;
      std::size_t len = j - start;
      if (j < n && len > 1) --len;
      out.emplace_back(text.substr(start, len));
      i = start + len;
    }
    return out;
  }

 private:
  static std::size_t utf8_length(unsigned char lead) {
    if (lead < 0x80) return 1;
    if ((lead >> 5) == 0x6) return 2;
    if ((lead >> 4) == 0xE) return 3;
    return 4;
  }

  static std::string utf8(std::uint32_t cp) {
    std::string s;
    if (cp < 0x80) {
      s.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
      s.push_back(static_cast<char>(0xC0 | (cp >> 6)));
      s.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
      s.push_back(static_cast<char>(0xE0 | (cp >> 12)));
      s.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      s.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
    return s;
  }

  void build_byte_tables() {
    std::uint32_t extra = 0;
    for (int b = 0; b < 256; ++b) {
      const bool printable = (b >= '!' && b <= '~') || (b >= 0xA1 && b <= 0xAC) || (b >= 0xAE && b <= 0xFF);
      const std::uint32_t cp = printable ? static_cast<std::uint32_t>(b) : 256 + extra++;
      byte_to_unicode_[b] = utf8(cp);
      unicode_to_byte_[byte_to_unicode_[b]] = static_cast<std::uint8_t>(b);
    }
  }

  std::vector<std::string> bpe(const std::string& mapped) const {
    {
      std::lock_guard<std::mutex> lock(*cache_mutex_);
      auto it = cache_.find(mapped);
      if (it != cache_.end()) return it->second;
    }
    std::vector<std::string> symbols;
    for (std::size_t i = 0; i < mapped.size();) {
      const std::size_t len = utf8_length(static_cast<unsigned char>(mapped[i]));
      symbols.push_back(mapped.substr(i, len));
      i += len;
    }
    while (symbols.size() > 1) {
      std::size_t best_rank = SIZE_MAX, best_i = 0;
      for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
        auto it = ranks_.find(symbols[i] + '\x01' + symbols[i + 1]);
        if (it != ranks_.end() && it->second < best_rank) {
          best_rank = it->second;
          best_i = i;
        }
      }
      if (best_rank == SIZE_MAX) break;
      const std::string left = symbols[best_i], right = symbols[best_i + 1];
      std::vector<std::string> merged;
      for (std::size_t i = 0; i < symbols.size();) {
        if (i + 1 < symbols.size() && symbols[i] == left && symbols[i + 1] == right) {
          merged.push_back(left + right);
          i += 2;
        } else {
          merged.push_back(symbols[i++]);
        }
      }
      symbols = std::move(merged);
    }
    std::lock_guard<std::mutex> lock(*cache_mutex_);
    cache_.emplace(mapped, symbols);
    return symbols;
  }

  std::map<std::string, TokenId> vocab_;
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, std::size_t> ranks_;
  std::string byte_to_unicode_[256];
  std::unordered_map<std::string, std::uint8_t> unicode_to_byte_;
  std::unique_ptr<std::mutex> cache_mutex_ = std::make_unique<std::mutex>();
  mutable std::unordered_map<std::string, std::vector<std::string>> cache_;
};

}  // namespace mecheval
