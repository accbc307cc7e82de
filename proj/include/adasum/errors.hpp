#pragma once

#include <stdexcept>
#include <string>

namespace adasum {

// Base class for all library errors.
struct error : std::runtime_error {
  explicit error(const std::string& what) : std::runtime_error(what) {}
};

// Tensor/vector length or layout mismatch.
struct shape_error : error {
  explicit shape_error(const std::string& what) : error(what) {}
};

// Invalid argument (empty reduction list, zero-norm atom, ...).
struct argument_error : error {
  explicit argument_error(const std::string& what) : error(what) {}
};

// Invalid collective configuration (world size not a power of two, ...).
struct config_error : error {
  explicit config_error(const std::string& what) : error(what) {}
};

// Non-finite values where finite ones are required, divergence, or a
// metric whose denominator vanished.
struct numeric_error : error {
  explicit numeric_error(const std::string& what) : error(what) {}
};

// Collective message tag mismatch: ranks disagree about which collective,
// recursion depth, or group they are in.
struct protocol_error : error {
  explicit protocol_error(const std::string& what) : error(what) {}
};

// Transport-level failure: socket error, peer gone, poisoned network.
struct transport_error : error {
  explicit transport_error(const std::string& what) : error(what) {}
};

// Ranks that must agree (e.g. on starting parameters) do not.
struct consistency_error : protocol_error {
  explicit consistency_error(const std::string& what) : protocol_error(what) {}
};

// Missing or malformed input file.
struct io_error : error {
  explicit io_error(const std::string& what) : error(what) {}
};

}  // namespace adasum
