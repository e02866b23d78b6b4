#include "dbdiag/architecture.hpp"

#include <charconv>
#include <optional>
#include <random>
#include <regex>

namespace dbdiag::detector {

namespace {

struct Located {
  ArchToken token;
  std::size_t column;  // 1-based
  std::string text;
};

bool is_dense(TokenKind k) { return k == TokenKind::Dense || k == TokenKind::PCA; }

std::size_t parse_units(std::string_view digits, std::size_t column, const std::string& text) {
  std::size_t n = 0;
  const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), n);
  if (digits.empty() || ec != std::errc() || ptr != digits.data() + digits.size() || n == 0) {
    throw ArchitectureError("invalid unit count in token '" + text + "'", column);
  }
  return n;
}

Located parse_token(std::string_view raw, std::size_t column) {
  const std::string text(raw);
  if (raw.empty()) throw ArchitectureError("empty token", column);
  Located out{{}, column, text};
  std::string_view s = raw;
  if (s.back() == '*') {
    out.token.reverse = true;
    s.remove_suffix(1);
  }
  if (s == "BTN") {
    out.token.kind = TokenKind::BTN;
  } else if (s == "BN") {
    out.token.kind = TokenKind::BN;
  } else if (s.size() >= 3 && s.front() == '(' && s.back() == ')') {
    std::string_view inner = s.substr(1, s.size() - 2);
    if (!inner.empty() && inner.back() == '*') {
      if (out.token.reverse) throw ArchitectureError("doubled '*' in token '" + text + "'", column);
      out.token.reverse = true;
      inner.remove_suffix(1);
    }
    out.token.kind = TokenKind::Dense;
    out.token.units = parse_units(inner, column, text);
  } else if (s.size() >= 6 && s.substr(0, 4) == "PCA(" && s.back() == ')') {
    out.token.kind = TokenKind::PCA;
    out.token.units = parse_units(s.substr(4, s.size() - 5), column, text);
  } else {
    throw ArchitectureError("unknown token '" + text + "'", column);
  }
  return out;
}

std::string render_token(const ArchToken& t) {
  switch (t.kind) {
    case TokenKind::BTN: return t.reverse ? "BTN*" : "BTN";
    case TokenKind::BN: return t.reverse ? "BN*" : "BN";
    case TokenKind::Dense:
      return "(" + std::to_string(t.units) + (t.reverse ? "*)" : ")");
    case TokenKind::PCA: return "PCA(" + std::to_string(t.units) + ")" + (t.reverse ? "*" : "");
  }
  return "?";
}

bool mirrors(const ArchToken& enc, const ArchToken& dec) {
  return enc.kind == dec.kind && enc.units == dec.units && !enc.reverse && dec.reverse;
}

std::string expand_alias(std::string_view text) {
  static const std::regex alias(R"(^\s*PCA-network\s*\((\d+)\)\s*(with\s+BTN)?\s*$)");
  std::cmatch m;
  if (std::regex_match(text.data(), text.data() + text.size(), m, alias)) {
    const std::string core = "PCA(" + m[1].str() + ")";
    return m[2].matched ? "BTN-" + core + "-BTN*" : core;
  }
  return std::string(text);
}

}  // namespace

std::string render_architecture(const std::vector<ArchToken>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += '-';
    out += render_token(tokens[i]);
  }
  return out;
}

ArchitectureSpec parse_architecture(std::string_view input) {
  const std::string text = expand_alias(input);
  std::vector<Located> toks;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= text.size(); ++i) {
    if (i == text.size() || text[i] == '-') {
      std::string_view tok(text.data() + start, i - start);
      while (!tok.empty() && tok.front() == ' ') tok.remove_prefix(1), ++start;
      while (!tok.empty() && tok.back() == ' ') tok.remove_suffix(1);
      toks.push_back(parse_token(tok, start + 1));
      start = i + 1;
    }
  }

  std::optional<std::size_t> firstStar;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (toks[i].token.reverse) {
      firstStar = i;
      break;
    }
  }
  std::optional<std::size_t> bottleneck;
  const std::size_t searchEnd = firstStar.value_or(toks.size());
  for (std::size_t i = 0; i < searchEnd; ++i) {
    if (is_dense(toks[i].token.kind)) bottleneck = i;
  }
  if (!bottleneck) {
    throw ArchitectureError("no dense layer before the decoder",
                            toks[firstStar.value_or(0)].column);
  }
  const std::size_t b = *bottleneck;

  std::size_t denseCount = 0;
  for (const auto& t : toks) denseCount += is_dense(t.token.kind) ? 1 : 0;
  for (const auto& t : toks) {
    if (t.token.kind == TokenKind::PCA && (t.token.reverse || denseCount != 1)) {
      throw ArchitectureError("PCA(n) must be the only dense layer and cannot be reversed", t.column);
    }
  }

  // Encoder [0, b), decoder (b, end) mirrors the encoder in reverse.
  for (std::size_t i = 0; i < b; ++i) {
    if (toks[i].token.reverse) {
      throw ArchitectureError("reverse layer '" + toks[i].text + "' appears before the bottleneck",
                              toks[i].column);
    }
  }
  const std::size_t decoderLen = toks.size() - b - 1;
  for (std::size_t k = 0; k < decoderLen; ++k) {
    const Located& dec = toks[b + 1 + k];
    if (!dec.token.reverse) {
      throw ArchitectureError("layer '" + dec.text + "' after the bottleneck must be a reverse layer",
                              dec.column);
    }
    if (k >= b) {
      throw ArchitectureError("reverse layer '" + dec.text + "' has no encoder layer to mirror",
                              dec.column);
    }
    const Located& enc = toks[b - 1 - k];
    if (!mirrors(enc.token, dec.token)) {
      throw ArchitectureError("reverse layer '" + dec.text + "' does not mirror encoder layer '" +
                                  enc.text + "' at column " + std::to_string(enc.column),
                              dec.column);
    }
  }
  if (decoderLen < b) {
    const Located& enc = toks[b - 1 - decoderLen];
    throw ArchitectureError("encoder layer '" + enc.text + "' has no decoder mirror", enc.column);
  }
  std::size_t firstDense = 0;
  while (!is_dense(toks[firstDense].token.kind)) ++firstDense;
  for (std::size_t i = firstDense; i < b; ++i) {
    if (toks[i].token.kind == TokenKind::BTN) {
      throw ArchitectureError("BTN must come before every dense layer (it normalizes whole windows)",
                              toks[i].column);
    }
  }

  ArchitectureSpec spec;
  for (const auto& t : toks) spec.tokens.push_back(t.token);
  spec.text = render_architecture(spec.tokens);

  std::size_t lastDense = 0;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (is_dense(toks[i].token.kind)) lastDense = i;
  }
  bool windowView = true;
  std::vector<std::size_t> btnStack;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    const ArchToken& t = toks[i].token;
    LayerSpec l;
    switch (t.kind) {
      case TokenKind::BTN:
        if (!t.reverse) {
          btnStack.push_back(spec.layers.size());
          l.kind = nn::LayerKind::BTN;
        } else {
          l.kind = nn::LayerKind::BTNReverse;
          l.pairedWith = btnStack.back();
          btnStack.pop_back();
        }
        l.windowView = true;
        spec.layers.push_back(l);
        break;
      case TokenKind::BN:
        l.kind = t.reverse ? nn::LayerKind::BNReverse : nn::LayerKind::BN;
        l.windowView = windowView;
        spec.layers.push_back(l);
        break;
      case TokenKind::Dense:
      case TokenKind::PCA:
        l.kind = t.reverse ? nn::LayerKind::DenseReverse : nn::LayerKind::Dense;
        l.units = t.units;
        spec.layers.push_back(l);
        if (t.kind == TokenKind::Dense) spec.layers.push_back({nn::LayerKind::ReLU});
        windowView = false;
        break;
    }
    if (i == lastDense) {
      LayerSpec out;
      out.kind = nn::LayerKind::Dense;
      out.outputProjection = true;
      spec.layers.push_back(out);
      windowView = true;
    }
  }
  return spec;
}

nn::Network build_network(const ArchitectureSpec& spec, nn::WindowShape shape, std::uint64_t seed) {
  if (shape.steps == 0 || shape.features == 0) throw ConfigError("window shape must be nonempty");
  std::mt19937_64 rng(seed);
  std::vector<std::unique_ptr<nn::Layer>> layers;
  std::size_t width = shape.width();
  for (const LayerSpec& l : spec.layers) {
    switch (l.kind) {
      case nn::LayerKind::Dense:
      case nn::LayerKind::DenseReverse: {
        const std::size_t out = l.outputProjection ? shape.width() : l.units;
        layers.push_back(std::make_unique<nn::DenseLayer>(width, out, rng,
                                                          l.kind == nn::LayerKind::DenseReverse));
        width = out;
        break;
      }
      case nn::LayerKind::ReLU:
        layers.push_back(std::make_unique<nn::ReluLayer>(width));
        break;
      case nn::LayerKind::BN:
      case nn::LayerKind::BNReverse:
        layers.push_back(std::make_unique<nn::BatchNormLayer>(
            width, l.windowView ? shape.features : width, l.kind == nn::LayerKind::BNReverse));
        break;
      case nn::LayerKind::BTN:
        layers.push_back(std::make_unique<nn::BtnLayer>(shape));
        break;
      case nn::LayerKind::BTNReverse:
        layers.push_back(std::make_unique<nn::BtnReverseLayer>(shape, l.pairedWith));
        break;
    }
  }
  return nn::Network(shape, std::move(layers));
}

}  // namespace dbdiag::detector
