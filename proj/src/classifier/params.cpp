#include "ltmia/classifier/params.hpp"

#include "ltmia/error.hpp"

namespace ltmia {

std::size_t ParamLayout::add(std::string name, std::size_t rows, std::size_t cols, bool decay) {
  if (find(name)) throw Error(ErrorKind::invalid_argument, "duplicate parameter name " + name);
  specs_.push_back(ParamSpec{std::move(name), rows, cols, decay, total_});
  total_ += rows * cols;
  return specs_.size() - 1;
}

std::optional<std::size_t> ParamLayout::find(std::string_view name) const {
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    if (specs_[i].name == name) return i;
  }
  return std::nullopt;
}

}  // namespace ltmia
