#pragma once

#include <string>
#include <vector>

#include "stsn/matrix.hpp"

namespace stsn {

/// Binary dataset format (all integers little-endian):
///   magic "STSN" (53 54 53 4E), version u16 = 1, problem count u32,
///   image height u16, width u16, channels u8.
/// Per problem: answer_index u8; problem_type u8; length-prefixed (u32)
/// UTF-8 JSON metadata carrying the rules and the symbolic panels; then 16
/// panels of H*W*C bytes each (pixel = round(value*255), row-major,
/// context 0..7 then candidates 0..7).
///
/// The round trip is bit-exact: read_dataset(write_dataset(ps)) == ps.
void write_dataset(const std::vector<MatrixProblem>& problems, const std::string& path);
std::vector<MatrixProblem> read_dataset(const std::string& path);

/// JSON metadata helpers (also used by reporting).
std::string problem_metadata_json(const MatrixProblem& problem);
void parse_problem_metadata_json(const std::string& json, MatrixProblem& problem);

}  // namespace stsn
