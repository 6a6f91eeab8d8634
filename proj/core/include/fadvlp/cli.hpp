#pragma once

// Command-line entry point: gen-data, build-triplets, pretrain, finetune,
// eval, infer and the end-to-end pipeline.
//
// Exit codes: 0 success, 1 usage or validation error (nothing written),
// 2 failure while running.

#include <string>
#include <vector>

namespace fadvlp {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);  // args[0] is the program name

}  // namespace fadvlp
