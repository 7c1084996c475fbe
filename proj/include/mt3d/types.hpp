#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace mt3d {

// Rows are tokens, columns are feature channels.
using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using RowVec = Eigen::RowVectorXd;
using FeatureMatrix = Eigen::MatrixXd;

enum class ErrorKind {
    InvalidArgument,
    EmptyInput,
    ShapeMismatch,
    NumericOverflow,
    Io,
    ChecksumMismatch,
    MissingTensor,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace mt3d
