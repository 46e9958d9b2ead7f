#ifndef SGPM_ERROR_HPP
#define SGPM_ERROR_HPP

#include <stdexcept>
#include <string>

namespace sgpm {

// All recoverable failures surface as Error with a context message.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace sgpm

#endif
