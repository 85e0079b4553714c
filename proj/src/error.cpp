#include "pbcnn/error.hpp"

#include <sstream>
#include <utility>

namespace pbcnn {

namespace {

std::string shape_message(const std::string& op, const std::string& dimension, std::size_t expected,
                          std::size_t actual) {
  std::ostringstream os;
  os << op << ": dimension '" << dimension << "' expected " << expected << ", got " << actual;
  return os.str();
}

}  // namespace

ShapeError::ShapeError(std::string op, std::string dimension, std::size_t expected, std::size_t actual)
    : Error(shape_message(op, dimension, expected, actual)),
      op_(std::move(op)),
      dimension_(std::move(dimension)),
      expected_(expected),
      actual_(actual) {}

ParseError::ParseError(std::size_t row, const std::string& message)
    : Error("row " + std::to_string(row) + ": " + message), row_(row) {}

CheckpointError::CheckpointError(Kind kind, const std::string& message) : Error(message), kind_(kind) {}

ConfigError::ConfigError(std::string field, const std::string& message)
    : Error(field + ": " + message), field_(std::move(field)) {}

IoError::IoError(std::string path, const std::string& message)
    : Error(path + ": " + message), path_(std::move(path)) {}

NumericError::NumericError(std::int64_t step, std::string layer, double max_abs_grad, const std::string& message)
    : Error(message), step_(step), layer_(std::move(layer)), max_abs_grad_(max_abs_grad) {}

}  // namespace pbcnn
