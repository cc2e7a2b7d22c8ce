#ifndef VRPPPO_GRID_HPP_
#define VRPPPO_GRID_HPP_

#include <cassert>
#include <vector>

namespace vrpppo {

// Dense row-major 2-D array. Small helper shared by the instance data
// (demands, capacities) and the environment state (assignment, loads).
template <typename T>
class Grid {
 public:
  Grid() : rows_(0), cols_(0) {}
  Grid(int rows, int cols, T fill = T{})
      : rows_(rows), cols_(cols), cells_(static_cast<size_t>(rows) * cols, fill) {}

  int rows() const { return rows_; }
  int cols() const { return cols_; }

  T& at(int r, int c) {
    assert(r >= 0 && r < rows_ && c >= 0 && c < cols_);
    return cells_[static_cast<size_t>(r) * cols_ + c];
  }
  const T& at(int r, int c) const {
    assert(r >= 0 && r < rows_ && c >= 0 && c < cols_);
    return cells_[static_cast<size_t>(r) * cols_ + c];
  }

  const std::vector<T>& cells() const { return cells_; }
  std::vector<T>& cells() { return cells_; }

  bool operator==(const Grid&) const = default;

 private:
  int rows_;
  int cols_;
  std::vector<T> cells_;
};

}  // namespace vrpppo

#endif  // VRPPPO_GRID_HPP_
