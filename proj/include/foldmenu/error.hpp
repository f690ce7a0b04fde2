#pragma once

#include <stdexcept>
#include <string>

namespace foldmenu {

/// Invalid input: dimension mismatch, broken ordering, bad schema row.
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A numerical procedure did not reach its tolerance (inversion, search).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool ok, const std::string& what) {
    if (!ok) throw InputError(what);
}

}  // namespace detail
}  // namespace foldmenu
