#pragma once

#include <string>
#include <vector>

#include "kgclm/config.hpp"
#include "kgclm/kgdata.hpp"

namespace kgc {

// Command bodies shared by the CLI binary and in-process tests. Each writes
// its fully resolved config next to its outputs and returns a process exit
// code (0 ok, 1 usage/config, 2 runtime).

int cmd_gen_data(const ExperimentConfig& cfg);
int cmd_train(const ExperimentConfig& cfg);
int cmd_eval(const ExperimentConfig& cfg);
int cmd_predict(const ExperimentConfig& cfg);
int cmd_report(const ExperimentConfig& cfg);

// Rebuilds the merged training graph from a data directory: every
// "<lang>.tsv" in sorted language order, plus optional alignment
// augmentation. gen-data uses the same path, so split manifests stay valid.
KnowledgeGraph build_graph_from_config(const ExperimentConfig& cfg);

// Manifest-backed split: loads data_dir/manifest.json when present,
// otherwise splits fresh and writes the manifest to out_dir.
DatasetSplit load_or_make_split(const KnowledgeGraph& g, const ExperimentConfig& cfg);

}  // namespace kgc
