#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace deltasurf {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;

inline constexpr double kPi = 3.14159265358979323846;

enum class ErrorKind {
  ImmersionFailure,
  OutOfTube,
  OutsideDomain,
  MeshGeneration,
  MeshQuality,
  IterationLimit,
  ChartDomain,
  Validity,
  InsufficientData,
  Quadrature,
  InvalidArgument,
  Config,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ImmersionFailure: return "immersion failure";
    case ErrorKind::OutOfTube: return "out of tube";
    case ErrorKind::OutsideDomain: return "outside parameter domain";
    case ErrorKind::MeshGeneration: return "mesh generation";
    case ErrorKind::MeshQuality: return "mesh quality";
    case ErrorKind::IterationLimit: return "iteration limit";
    case ErrorKind::ChartDomain: return "offset exceeds chart";
    case ErrorKind::Validity: return "validity";
    case ErrorKind::InsufficientData: return "insufficient data";
    case ErrorKind::Quadrature: return "quadrature";
    case ErrorKind::InvalidArgument: return "invalid argument";
    case ErrorKind::Config: return "config";
  }
  return "unknown";
}

/// Base exception for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) throw Error(kind, message);
}

}  // namespace deltasurf
