// Copyright 2026 The MSMA-TTS Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line entry point.
//
//   msma <command> --config FILE [--set key=value]... [--seed N]
//
// Run directory layout (<run_root>/<fingerprint>/):
//   config.json                 resolved document
//   corpus/manifest.tsv, corpus/mels/, corpus/speakers.spk
//   stage1/model.msck, stage1/loss.tsv, stage1/step-<n>.msck
//   targets/                    extracted H_G / H_L
//   stage2/lapm.msck, stage2/loss.tsv
//   centroids.json
//   synth/<name>.mel, synth/<name>.json, synth/<name>.wav
//   eval/report.tsv
//   embeddings/<global|local-mean>.csv
//
// Exit status: 0 success, 1 runtime failure, 2 configuration or usage error.
// Failures print one JSON line {"error": {...}} to the error stream.

#ifndef MSMA_CLI_HPP_
#define MSMA_CLI_HPP_

#include <ostream>
#include <string>
#include <vector>

namespace msma {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

/// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err);

}  // namespace msma

#endif  // MSMA_CLI_HPP_
