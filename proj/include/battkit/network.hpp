#pragma once

#include "battkit/soc.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace battkit::soc {

enum class Activation { tanh, sigmoid, linear };

struct Layer {
    Eigen::MatrixXd weights;  // out x in
    Eigen::VectorXd bias;
    Activation activation = Activation::tanh;
};

/// Operational definition of "fully charged": the network output is forced
/// to exactly 100 when the present cell voltage and current (feature slots 0
/// and 1) satisfy both bounds.
struct FullChargeRule {
    double cell_voltage = 4.15;
    double taper_c_rate = 0.05;
    double capacity_ah = 1.0;
};

/// Feed-forward SOC estimator. Holds everything needed to go from raw feature
/// rows to a clamped SOC estimate.
class SocNetwork {
public:
    SocNetwork() = default;
    /// Zero-initialised network; hidden layers use `hidden`, the output layer
    /// `output`.
    SocNetwork(std::vector<std::size_t> layer_sizes, Activation hidden, Activation output = Activation::linear);

    const std::vector<std::size_t>& layer_sizes() const { return sizes_; }
    std::vector<Layer>& layers() { return layers_; }
    const std::vector<Layer>& layers() const { return layers_; }

    std::size_t input_size() const { return sizes_.empty() ? 0 : sizes_.front(); }
    std::size_t parameter_count() const;
    /// Flattened as, per layer, the weights in row-major order then the bias.
    Eigen::VectorXd parameters() const;
    void set_parameters(const Eigen::VectorXd& theta);

    /// Raw (unclamped) output for an already-normalised input.
    double forward(std::span<const double> normalized) const;

    /// Raw outputs for the columns of `inputs` (features x samples) and, when
    /// `jacobian` is non-null, d(output)/d(parameters) for every sample as a
    /// (samples x parameters) matrix.
    Eigen::VectorXd forward_batch(const Eigen::MatrixXd& inputs, Eigen::MatrixXd* jacobian = nullptr) const;

    /// Throws DomainError when shapes or normalisation are inconsistent.
    void validate() const;

    Normalization normalization;
    WindowConfig window;
    std::optional<FullChargeRule> full_charge;

private:
    std::vector<std::size_t> sizes_;
    std::vector<Layer> layers_;
};

/// Normalise, run forward, clamp to [0, 100]; the full-charge rule overrides
/// the network. `features` are raw (un-normalised) values.
SocEstimate predict(const SocNetwork& network, std::span<const double> features, double timestamp = 0.0);

struct LabeledRow {
    std::vector<double> features;  // raw
    double target = 0.0;           // percent
    double timestamp = 0.0;
};

struct SplitConfig {
    double train = 0.70;
    double validation = 0.15;
    double test = 0.15;
    std::uint64_t seed = 1;
};

struct LmConfig {
    std::vector<std::size_t> hidden = {12, 8};
    Activation hidden_activation = Activation::tanh;
    double damping_initial = 1e-3;
    double damping_increase = 10.0;
    double damping_decrease = 10.0;
    double damping_max = 1e10;
    std::size_t max_epochs = 300;
    /// Early stop after this many epochs without validation improvement.
    std::size_t patience = 6;
    double min_gradient = 1e-10;
    std::uint64_t seed = 1;
    WindowConfig window;
    std::optional<FullChargeRule> full_charge;
};

struct EvalReport {
    double rmse = 0.0;
    double max_abs_error = 0.0;
    /// Fraction of samples whose error is within +/-5 SOC points.
    double within_5 = 0.0;
    std::size_t count = 0;
};

struct TrainReport {
    EvalReport train;
    EvalReport validation;
    EvalReport test;
    std::size_t epochs = 0;
    double final_damping = 0.0;
    std::uint64_t seed = 0;
    std::string stop_reason;
    bool small_dataset_warning = false;
    /// Sum of squared training residuals after every accepted step; the first
    /// entry is the initial loss.
    std::vector<double> loss_history;
};

EvalReport evaluate(const SocNetwork& network, std::span<const LabeledRow> dataset);

/// Attaches targets interpolated from a reference SOC trace (percent) at each
/// row timestamp. `truth_t` must be strictly increasing.
std::vector<LabeledRow> label_rows(std::span<const FeatureRow> rows, std::span<const double> truth_t,
                                   std::span<const double> truth_soc);

std::pair<SocNetwork, TrainReport> train(std::span<const LabeledRow> dataset, const SplitConfig& split,
                                         const LmConfig& lm);

/// Solves (J^T J + damping I) step = -J^T r.
Eigen::VectorXd lm_step(const Eigen::MatrixXd& jacobian, const Eigen::VectorXd& residuals, double damping);

/// Random Xavier-uniform weights and zero biases.
void randomize(SocNetwork& network, std::uint64_t seed);

void save_network(const SocNetwork& network, const std::string& path);
SocNetwork load_network(const std::string& path);
std::string network_to_json(const SocNetwork& network);
SocNetwork network_from_json(const std::string& text);

const char* to_string(Activation a);
Activation activation_from_string(const std::string& s);

} // namespace battkit::soc
