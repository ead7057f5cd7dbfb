#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace flowlab {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Point outside the admissible set of a model (puncture, excluded set, off-chart).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Point where a quantity is intrinsically undefined, e.g. dr at the pole.
class SingularPointError : public DomainError {
 public:
  using DomainError::DomainError;
};

// Caller violated a precondition (non-tangent input, v = 0, bad ladder...).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// The requested operation needs data the object does not carry
// (missing jacobian, backend not available for this model, ...).
class CapabilityError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace flowlab
