#pragma once

// Command-line front end: gen, train, eval, det, gradcheck.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "omad/gradcheck.hpp"
#include "omad/model.hpp"

namespace omad::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

// Parses args (args[0] is the program name) and runs one subcommand.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct GradCheckRun {
  GradCheckReport report;
  std::size_t parameter_count = 0;
};

// Finite-difference check of the full objective for the default model in
// 64-bit mode on a small synthetic batch (two bona fide, two attacks).
GradCheckRun run_gradcheck(std::uint64_t seed, double alpha, double tolerance, std::size_t samples, double step,
                           const ModelConfig& config = ModelConfig{});

}  // namespace omad::cli
