#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <vector>

#include "meada/data.hpp"
#include "meada/model.hpp"
#include "meada/objectives.hpp"

namespace meada {

// Minimax training knobs. alpha and eta admit 0 (an inert step): the zero-step
// identities are part of the operation contracts. final_steps -1 means the
// documented default of 10 * t_min.
struct AdvConfig {
    int k = 3;           // minimax rounds; 0 degenerates to plain ERM
    int t_min = 100;     // minimization steps per round
    int t_max = 15;      // ascent steps per sample
    double alpha = 1e-4; // minimization learning rate
    double eta = 1.0;    // ascent step size
    double gamma = 1.0;  // transport penalty weight
    double beta = 10.0;  // prediction-entropy weight
    double weight_decay = 0.0;
    int batch_size = 32;
    int final_steps = -1;
    std::string optimizer = "adam";        // "adam" | "sgd"
    std::string lr_schedule = "constant";  // "constant" | "cosine"
    bool clip_pixels = false;         // clamp ascent output to [0,1] after the last step
    bool perturb_source_only = false; // grow by N0 per round instead of doubling
    std::uint64_t seed = 0;

    int resolved_final_steps() const { return final_steps < 0 ? 10 * t_min : final_steps; }
    ObjectiveConfig objective() const { return {beta, gamma, weight_decay}; }
};

void validate_adv_config(const AdvConfig& cfg);

// Learning rate at a global minimization step: constant, or cosine over the
// whole budget k * t_min + final_steps.
double lr_at(const AdvConfig& cfg, int global_step);

// One training record with provenance: source records carry round 0 and their
// own index; adversarial records carry the round that made them and the index
// of the record they were perturbed from. Labels are inherited unchanged.
struct Record {
    Tensor image;  // model input shape, no batch axis
    int label = 0;
    int origin = 0;
    int round = 0;
};

struct AugmentedDataset {
    std::vector<Record> records;
    int source_size = 0;

    int size() const { return static_cast<int>(records.size()); }
};

// Reshapes each image row to input_shape (numel must match) and tags it as a
// round-0 record.
AugmentedDataset wrap_source(const ImageDataset& ds, const Shape& input_shape);

struct Batch {
    Tensor x;  // [B, ...input_shape]
    std::vector<int> labels;
};

Batch gather_batch(const AugmentedDataset& ds, const std::vector<int>& indices);

// Indices for the batch drawn at a given global step: uniform with
// replacement, or all of 0..n-1 in order when batch_size covers the dataset.
std::vector<int> sample_batch_indices(const AdvConfig& cfg, int global_step, int n);

// Plain SGD or Adam (0.9 / 0.999 / 1e-8, bias-corrected). Moment slots are
// aligned with Model::params and serialized in checkpoints so a resumed run
// continues the same trajectory.
struct Optimizer {
    std::string kind = "adam";
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t t = 0;         // adam update count
    std::vector<Tensor> m, v;   // empty for sgd
};

Optimizer make_optimizer(const std::string& kind, const Model& model);
void optimizer_step(Optimizer& opt, Model& model, const std::vector<Tensor>& grads, double lr);

// One JSONL metrics record. entropy_origin_mean and flagged are meaningful on
// "aug" records only and are omitted from the JSON elsewhere.
struct MetricsRecord {
    std::string phase;  // "min" | "aug" | "final"
    int round = 0;
    int step = 0;        // global minimization step at emission time
    double loss = 0.0;   // minimization: L_IB; augmentation: mean final ascent objective
    double ce = 0.0;
    double entropy_mean = 0.0;
    double entropy_origin_mean = 0.0;
    int flagged = 0;     // ascent rows frozen at their last finite iterate
    int dataset_size = 0;
    double wallclock_s = 0.0;
};

std::string metrics_json(const MetricsRecord& rec);
void write_metrics(const std::string& path, const std::vector<MetricsRecord>& log);

// Whole-run state. Phases are indexed min(1) aug(1) ... min(K) aug(K) final;
// every random stream is derived from (cfg.seed, tag, counters), so the
// counters below capture the full RNG position.
struct TrainerState {
    Model model;
    Optimizer opt;
    AdvConfig cfg;
    int next_phase = 0;
    int global_step = 0;
    std::chrono::steady_clock::time_point run_start = std::chrono::steady_clock::now();
};

TrainerState init_trainer(const ModelSpec& spec, const AdvConfig& cfg);

int phase_count(const AdvConfig& cfg);                  // 2k + 1
std::string phase_name(const AdvConfig& cfg, int phase);

// Result of batched gradient ascent. Rows whose objective or input gradient
// turned non-finite are frozen at their last finite iterate and flagged.
struct AscentResult {
    Tensor x;                            // [N, ...input_shape]
    std::vector<double> objective;       // final per-row ascent objective
    std::vector<double> ce;              // final per-row cross-entropy
    std::vector<double> entropy;         // final per-row prediction entropy
    std::vector<double> origin_entropy;  // prediction entropy of the anchors
    std::vector<char> flagged;
};

// t_max fixed-step ascent of CE + beta h - gamma ||z - z0||^2 jointly over a
// batch. Rows never interact, so the result is bit-identical to per-sample
// ascent; trace (when given) receives the per-row objective at every iterate,
// final iterate included. No pixel clipping unless cfg.clip_pixels.
AscentResult maximize_batch(const Model& m, const Tensor& x0, const std::vector<int>& labels,
                            const AdvConfig& cfg,
                            std::vector<std::vector<double>>* trace = nullptr);

// Single-sample form: x0 has the bare input shape.
Tensor maximize_sample(const Model& m, const Tensor& x0, int y, const AdvConfig& cfg);

// cfg.t_min optimizer steps on uniformly sampled batches; advances next_phase.
// Non-finite loss or gradient aborts with a numeric_error carrying a snapshot.
void minimize_phase(TrainerState& st, const AugmentedDataset& ds,
                    std::vector<MetricsRecord>* log = nullptr);

// Perturbs every record (source records only under cfg.perturb_source_only)
// under the fixed model and appends the results with provenance round_k.
// Existing records are untouched. Returns the round's metrics with step and
// wallclock left to the caller.
MetricsRecord augment_round(const Model& m, AugmentedDataset& ds, int round_k,
                            const AdvConfig& cfg);

// Executes the next phase; false when the run is complete.
bool step_phase(TrainerState& st, AugmentedDataset& ds, std::vector<MetricsRecord>& log);

struct RunResult {
    TrainerState state;
    AugmentedDataset dataset;
    std::vector<MetricsRecord> metrics;
};

// Algorithm 1 end to end: K alternations of minimization and dataset-growing
// maximization, then the final training loop.
RunResult run_me_ada(const ImageDataset& source, const ModelSpec& spec, const AdvConfig& cfg);

// Continues a (possibly mid-run) state to completion. The dataset must be the
// one the state was trained on; metrics are appended to `log`.
RunResult resume_me_ada(TrainerState st, AugmentedDataset ds,
                        std::vector<MetricsRecord> log = {});

struct EvalResult {
    std::string domain;
    double accuracy = 0.0;
    int n = 0;
    double entropy_mean = 0.0;
};

// Batched inference accuracy (argmax, first maximum wins) and mean prediction
// entropy. Images are reshaped to the model input shape; numel must match.
EvalResult evaluate(const Model& m, const ImageDataset& ds, int batch_size = 256);

// Checkpoint file: "MEADA", version byte 0x01, u64-LE header length, UTF-8
// JSON header (spec, config, counters, rng state, ordered tensor manifest),
// then raw little-endian float64 tensor data in manifest order. The training
// dataset can be embedded as data.* manifest tensors — byte quantization would
// break resume equivalence, so the IDX export path is not reused here.
struct Checkpoint {
    TrainerState state;
    bool has_dataset = false;
    AugmentedDataset dataset;
};

void save_checkpoint(const std::string& path, const TrainerState& st,
                     const AugmentedDataset* ds = nullptr);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace meada
