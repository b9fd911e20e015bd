#pragma once

#include <filesystem>

#include "d3g/numerics.hpp"

namespace d3g {

// Binary matrix container:
//   4 bytes magic, u32 rows, u32 cols (little-endian), row-major payload.
// "D3GF" carries little-endian float32 values (corpus features); "D3GD"
// carries little-endian float64 values (model checkpoints).
enum class Precision { f32, f64 };

void write_matrix(const std::filesystem::path& path, const Matrix& m, Precision precision);

// Throws Error(missing_file) if absent, Error(format) on a bad magic,
// Error(truncated) if the payload is shorter than the header promises.
Matrix read_matrix(const std::filesystem::path& path);

// Rounds every entry to the nearest float32, the precision of "D3GF" files.
void quantize_f32(Matrix& m);

} // namespace d3g
