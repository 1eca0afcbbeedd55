#pragma once

#include <cstring>
#include <type_traits>

#include <Eigen/Dense>

namespace fnmme {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

/// Same shape and bit-identical contents.
template <typename A, typename B>
bool identical(const Eigen::PlainObjectBase<A>& a, const Eigen::PlainObjectBase<B>& b) {
  using Scalar = typename A::Scalar;
  static_assert(std::is_same_v<Scalar, typename B::Scalar>);
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(Scalar) * static_cast<std::size_t>(a.size())) == 0;
}

}  // namespace fnmme
