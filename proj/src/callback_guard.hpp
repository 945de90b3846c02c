#pragma once

#include <exception>
#include <string>

#include "sdcert/errors.hpp"

namespace sdcert::detail {

/// Invokes a user callback, mapping exceptions and non-finite output to CallbackError at time t.
template <class F, class... Args>
auto guarded(double t, const char* name, const F& fn, const Args&... args) {
    if (!fn) {
        throw CallbackError(t, std::string(name) + " is not set");
    }
    try {
        auto out = fn(args...);
        if (!out.allFinite()) {
            throw CallbackError(t, std::string(name) + " returned a non-finite value");
        }
        return out;
    } catch (const CallbackError&) {
        throw;
    } catch (const std::exception& e) {
        throw CallbackError(t, std::string(name) + " failed: " + e.what());
    }
}

} // namespace sdcert::detail
