// core/include/mgf/error.hpp
//
// Error type shared by all mgf modules. Messages are stable strings that
// callers (and tests) match on.

#ifndef MGF_ERROR_HPP_
#define MGF_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace mgf {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace mgf

#endif  // MGF_ERROR_HPP_
