#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ltmia {

struct ParamSpec {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  /// Subject to decoupled weight decay (weight matrices only).
  bool decay = false;
  std::size_t offset = 0;

  std::size_t size() const noexcept { return rows * cols; }
};

/// Named tensors packed into one flat buffer. Optimizer state, gradients and
/// checkpoints all share this layout.
class ParamLayout {
 public:
  std::size_t add(std::string name, std::size_t rows, std::size_t cols, bool decay);

  const std::vector<ParamSpec>& specs() const noexcept { return specs_; }
  const ParamSpec& operator[](std::size_t i) const { return specs_[i]; }
  std::size_t total() const noexcept { return total_; }
  std::optional<std::size_t> find(std::string_view name) const;

  bool operator==(const ParamLayout&) const = default;

 private:
  std::vector<ParamSpec> specs_;
  std::size_t total_ = 0;
};

inline bool operator==(const ParamSpec& a, const ParamSpec& b) {
  return a.name == b.name && a.rows == b.rows && a.cols == b.cols && a.decay == b.decay &&
         a.offset == b.offset;
}

}  // namespace ltmia
