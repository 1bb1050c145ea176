#pragma once

#include <string>
#include <vector>

#include "eigenscope/catmap.hpp"
#include "eigenscope/core.hpp"
#include "eigenscope/refine.hpp"

namespace eigenscope {

/// "EGSC" binary: magic, u32 version 1, u32 N, then interleaved re/im
/// float64 little endian, column-major. Square matrices carry 2N² values,
/// state vectors 2N.
void write_egsc(const std::string& path, const Matrix& m);
void write_egsc(const std::string& path, const Vector& v);
/// N×N or N×1 depending on the payload length.
Matrix read_egsc(const std::string& path);

/// %.17g
std::string format_double(double x);

/// Row-major grid, one CSV line per row.
void write_grid_csv(const std::string& path, const RealMatrix& grid);
void write_jacobian_csv(const std::string& path, const JacobianTable& jac);
/// Columns word,mass with the word as a letter string.
void write_cylinder_csv(const std::string& path, const CylinderMeasure& measure);

/// Header line then rows of numbers.
void write_series_csv(const std::string& path, const std::vector<std::string>& header,
                      const std::vector<std::vector<double>>& rows);

}  // namespace eigenscope
