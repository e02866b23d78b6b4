#pragma once

// Architecture strings for the reconstruction autoencoder.
//
// Grammar: tokens separated by '-', each one of
//   BTN | BN | (n) | PCA(n)      optionally followed by '*' (a decoder mirror;
//                                 for dense tokens the star sits inside: (n*))
// The last unstarred dense token is the bottleneck. Tokens before it form the
// encoder, tokens after it must be starred and mirror the encoder in reverse
// order. Every (n) is followed by a ReLU; a linear dense layer mapping back to
// the window width is inserted after the last dense token. PCA(n) is a linear
// bottleneck with no other dense layers.
//
// "PCA-network (n)" and "PCA-network (n) with BTN" are accepted as aliases
// for "PCA(n)" and "BTN-PCA(n)-BTN*".

#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "dbdiag/error.hpp"
#include "dbdiag/nn.hpp"

namespace dbdiag::detector {

enum class TokenKind { BTN, BN, Dense, PCA };

struct ArchToken {
  TokenKind kind = TokenKind::Dense;
  std::size_t units = 0;  // Dense and PCA only
  bool reverse = false;
  friend bool operator==(const ArchToken&, const ArchToken&) = default;
};

inline constexpr std::size_t kNoPair = std::numeric_limits<std::size_t>::max();

struct LayerSpec {
  nn::LayerKind kind = nn::LayerKind::Dense;
  std::size_t units = 0;         // dense output width; 0 for the output projection
  bool outputProjection = false;  // dense layer that maps back to the window width
  bool windowView = false;        // normalization applied to the [steps, features] view
  std::size_t pairedWith = kNoPair;  // BTNReverse: index of its BTN in the layer list
  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct ArchitectureSpec {
  std::string text;  // canonical rendering
  std::vector<ArchToken> tokens;
  std::vector<LayerSpec> layers;
  friend bool operator==(const ArchitectureSpec&, const ArchitectureSpec&) = default;
};

class ArchitectureError : public ConfigError {
 public:
  ArchitectureError(const std::string& what, std::size_t column)
      : ConfigError(what + " (at column " + std::to_string(column) + ")"), column_(column) {}
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t column_;
};

ArchitectureSpec parse_architecture(std::string_view text);
std::string render_architecture(const std::vector<ArchToken>& tokens);

/// Instantiates the layer stack for windows of the given shape. Dense weights
/// are drawn from a generator seeded with `seed`.
nn::Network build_network(const ArchitectureSpec& spec, nn::WindowShape shape, std::uint64_t seed);

/// The standard ablation set: ten autoencoders from linear to deep, with and
/// without each normalization.
inline const std::vector<std::string> kAblationArchitectures = {
    "PCA-network (50)",
    "PCA-network (50) with BTN",
    "(150)-(50)-(150*)",
    "(150)-BN-(50)-BN*-(150*)",
    "BN-(150)-(50)-(150*)-BN*",
    "BTN-(150)-(50)-(150*)-BTN*",
    "BTN-(150)-BN-(50)-BN*-(150*)-BTN*",
    "BN-(500)-(300)-(150)-(300*)-(500*)-BN*",
    "BTN-(500)-(300)-(150)-(300*)-(500*)-BTN*",
    "BTN-(500)-BN-(300)-(150)-(300*)-BN*-(500*)-BTN*",
};

}  // namespace dbdiag::detector
