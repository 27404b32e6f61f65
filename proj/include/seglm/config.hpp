#pragma once

#include <map>
#include <string>
#include <vector>

#include "seglm/model.hpp"
#include "seglm/train.hpp"

namespace seglm {

// Declarative experiment file: flat key=value lines under [section] headers,
// no nesting. Unknown sections or keys are rejected; keys naming input files
// must point at existing paths when the file is loaded.
//
//   [data]
//   train=corpora/train.txt
//   val=corpora/val.txt
//   [model]
//   d_model=256
//   [train]
//   steps=16768
//   [sweep]
//   learning_rates=1e-4,2.5e-4
//   encoder_dropouts=0.125,0.25
//   [output]
//   dir=runs/exp1
struct ExperimentConfig {
  std::map<std::string, std::string> values;  // "section.key" -> value

  static ExperimentConfig load(const std::string& path);
  static ExperimentConfig parse(const std::string& text,
                                const std::string& base_dir);

  bool has(const std::string& key) const;
  std::string get(const std::string& key, const std::string& fallback) const;

  // Overlay onto defaults; only the keys present in the file are applied.
  void apply_model(ModelConfig* cfg) const;
  void apply_train(TrainConfig* cfg) const;
  train::SweepGrid sweep_grid() const;  // errors when [sweep] is absent

  std::string summary() const;  // e.g. for --dry-run
};

}  // namespace seglm
