#include "battkit/network.hpp"

#include "battkit/error.hpp"
#include "battkit/signal.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace battkit::soc {

namespace {

constexpr const char* kModule = "socmodel";
constexpr int kModelVersion = 1;

Eigen::MatrixXd activate(const Eigen::MatrixXd& z, Activation a) {
    switch (a) {
    case Activation::tanh: return z.array().tanh().matrix();
    case Activation::sigmoid: return (1.0 / (1.0 + (-z.array()).exp())).matrix();
    case Activation::linear: return z;
    }
    return z;
}

/// Derivative expressed through the activation output.
Eigen::MatrixXd activation_slope(const Eigen::MatrixXd& out, Activation a) {
    switch (a) {
    case Activation::tanh: return (1.0 - out.array().square()).matrix();
    case Activation::sigmoid: return (out.array() * (1.0 - out.array())).matrix();
    case Activation::linear: return Eigen::MatrixXd::Ones(out.rows(), out.cols());
    }
    return out;
}

Eigen::MatrixXd to_matrix(std::span<const LabeledRow> rows, std::span<const std::size_t> idx,
                          const Normalization& norm) {
    const std::size_t d = norm.mean.size();
    Eigen::MatrixXd X(d, idx.size());
    for (std::size_t c = 0; c < idx.size(); ++c) {
        const auto& f = rows[idx[c]].features;
        for (std::size_t j = 0; j < d; ++j) X(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(c)) = (f[j] - norm.mean[j]) / norm.scale[j];
    }
    return X;
}

Eigen::VectorXd targets(std::span<const LabeledRow> rows, std::span<const std::size_t> idx) {
    Eigen::VectorXd y(idx.size());
    for (std::size_t c = 0; c < idx.size(); ++c) y(static_cast<Eigen::Index>(c)) = rows[idx[c]].target;
    return y;
}

EvalReport evaluate_subset(const SocNetwork& net, std::span<const LabeledRow> rows, std::span<const std::size_t> idx) {
    EvalReport r;
    r.count = idx.size();
    if (idx.empty()) {
        r.rmse = r.max_abs_error = std::numeric_limits<double>::quiet_NaN();
        return r;
    }
    double sse = 0.0;
    std::size_t within = 0;
    for (auto i : idx) {
        const double e = predict(net, rows[i].features, rows[i].timestamp).soc - rows[i].target;
        sse += e * e;
        r.max_abs_error = std::max(r.max_abs_error, std::abs(e));
        if (std::abs(e) <= 5.0) ++within;
    }
    r.rmse = std::sqrt(sse / static_cast<double>(idx.size()));
    r.within_5 = static_cast<double>(within) / static_cast<double>(idx.size());
    return r;
}

} // namespace

const char* to_string(Activation a) {
    switch (a) {
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
    case Activation::linear: return "linear";
    }
    return "linear";
}

Activation activation_from_string(const std::string& s) {
    if (s == "tanh") return Activation::tanh;
    if (s == "sigmoid") return Activation::sigmoid;
    if (s == "linear") return Activation::linear;
    throw DomainError(kModule, "unknown activation '" + s + "'");
}

SocNetwork::SocNetwork(std::vector<std::size_t> layer_sizes, Activation hidden, Activation output)
    : sizes_(std::move(layer_sizes)) {
    if (sizes_.size() < 2) throw DomainError(kModule, "a network needs at least an input and an output layer");
    if (sizes_.back() != 1) throw DomainError(kModule, "the SOC network has a single output");
    for (auto s : sizes_)
        if (s == 0) throw DomainError(kModule, "layer sizes must be positive");
    for (std::size_t l = 1; l < sizes_.size(); ++l) {
        Layer layer;
        layer.weights = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(sizes_[l]), static_cast<Eigen::Index>(sizes_[l - 1]));
        layer.bias = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(sizes_[l]));
        layer.activation = (l + 1 == sizes_.size()) ? output : hidden;
        layers_.push_back(std::move(layer));
    }
    normalization.mean.assign(sizes_.front(), 0.0);
    normalization.scale.assign(sizes_.front(), 1.0);
}

std::size_t SocNetwork::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
    return n;
}

Eigen::VectorXd SocNetwork::parameters() const {
    Eigen::VectorXd theta(static_cast<Eigen::Index>(parameter_count()));
    Eigen::Index k = 0;
    for (const auto& l : layers_) {
        for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
            for (Eigen::Index c = 0; c < l.weights.cols(); ++c) theta(k++) = l.weights(r, c);
        for (Eigen::Index r = 0; r < l.bias.size(); ++r) theta(k++) = l.bias(r);
    }
    return theta;
}

void SocNetwork::set_parameters(const Eigen::VectorXd& theta) {
    if (static_cast<std::size_t>(theta.size()) != parameter_count())
        throw DomainError(kModule, "parameter vector length mismatch");
    Eigen::Index k = 0;
    for (auto& l : layers_) {
        for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
            for (Eigen::Index c = 0; c < l.weights.cols(); ++c) l.weights(r, c) = theta(k++);
        for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias(r) = theta(k++);
    }
}

double SocNetwork::forward(std::span<const double> normalized) const {
    if (normalized.size() != input_size()) throw DomainError(kModule, "feature vector length does not match input layer");
    Eigen::MatrixXd x(static_cast<Eigen::Index>(normalized.size()), 1);
    for (std::size_t j = 0; j < normalized.size(); ++j) x(static_cast<Eigen::Index>(j), 0) = normalized[j];
    return forward_batch(x)(0);
}

Eigen::VectorXd SocNetwork::forward_batch(const Eigen::MatrixXd& inputs, Eigen::MatrixXd* jacobian) const {
    if (static_cast<std::size_t>(inputs.rows()) != input_size())
        throw DomainError(kModule, "input rows do not match input layer");
    const Eigen::Index n = inputs.cols();
    std::vector<Eigen::MatrixXd> acts;
    acts.reserve(layers_.size() + 1);
    acts.push_back(inputs);
    for (const auto& l : layers_) {
        Eigen::MatrixXd z = l.weights * acts.back();
        z.colwise() += l.bias;
        acts.push_back(activate(z, l.activation));
    }
    Eigen::VectorXd out = acts.back().row(0).transpose();
    if (!jacobian) return out;

    jacobian->resize(n, static_cast<Eigen::Index>(parameter_count()));
    // Offsets of each layer's block inside the parameter vector.
    std::vector<Eigen::Index> offset(layers_.size());
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        offset[l] = k;
        k += layers_[l].weights.size() + layers_[l].bias.size();
    }
    // delta_l = d(out)/d(z_l), one column per sample.
    Eigen::MatrixXd delta = activation_slope(acts.back(), layers_.back().activation);
    for (std::size_t l = layers_.size(); l-- > 0;) {
        const auto& layer = layers_[l];
        const Eigen::MatrixXd& a_prev = acts[l];
        const Eigen::Index rows = layer.weights.rows(), cols = layer.weights.cols();
        for (Eigen::Index r = 0; r < rows; ++r) {
            // d out / d W(r, c) = delta(r) * a_prev(c)
            jacobian->block(0, offset[l] + r * cols, n, cols) =
                (a_prev.array().rowwise() * delta.row(r).array()).transpose().matrix();
        }
        jacobian->block(0, offset[l] + rows * cols, n, rows) = delta.transpose();
        if (l > 0) {
            delta = (layer.weights.transpose() * delta).cwiseProduct(activation_slope(acts[l], layers_[l - 1].activation));
        }
    }
    return out;
}

void SocNetwork::validate() const {
    if (sizes_.size() < 2 || layers_.size() + 1 != sizes_.size()) throw DomainError(kModule, "layer list inconsistent with sizes");
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& L = layers_[l];
        if (static_cast<std::size_t>(L.weights.rows()) != sizes_[l + 1] ||
            static_cast<std::size_t>(L.weights.cols()) != sizes_[l] ||
            static_cast<std::size_t>(L.bias.size()) != sizes_[l + 1])
            throw DomainError(kModule, "weight matrix shape inconsistent with layer sizes");
    }
    if (normalization.mean.size() != sizes_.front() || normalization.scale.size() != sizes_.front())
        throw DomainError(kModule, "normalisation length does not match input layer");
    for (double s : normalization.scale)
        if (!(s > 0.0)) throw DomainError(kModule, "normalisation scales must be strictly positive");
}

SocEstimate predict(const SocNetwork& network, std::span<const double> features, double timestamp) {
    if (features.size() != network.input_size())
        throw DomainError(kModule, "feature vector length " + std::to_string(features.size()) +
                                       " does not match input layer " + std::to_string(network.input_size()));
    SocEstimate e{0.0, timestamp, SocSource::network};
    if (const auto& rule = network.full_charge; rule && features.size() >= 2) {
        if (features[0] >= rule->cell_voltage && std::abs(features[1]) <= rule->taper_c_rate * rule->capacity_ah) {
            e.soc = 100.0;
            return e;
        }
    }
    const double raw = network.forward(network.normalization.apply(features));
    e.soc = std::isfinite(raw) ? std::clamp(raw, 0.0, 100.0) : 0.0;
    return e;
}

std::vector<LabeledRow> label_rows(std::span<const FeatureRow> rows, std::span<const double> truth_t,
                                   std::span<const double> truth_soc) {
    std::vector<LabeledRow> out;
    out.reserve(rows.size());
    for (const auto& r : rows)
        out.push_back({r.values, std::clamp(signal::interp(truth_t, truth_soc, r.timestamp), 0.0, 100.0), r.timestamp});
    return out;
}

EvalReport evaluate(const SocNetwork& network, std::span<const LabeledRow> dataset) {
    if (dataset.empty()) throw DomainError(kModule, "cannot evaluate on an empty dataset");
    std::vector<std::size_t> idx(dataset.size());
    std::iota(idx.begin(), idx.end(), 0);
    return evaluate_subset(network, dataset, idx);
}

Eigen::VectorXd lm_step(const Eigen::MatrixXd& jacobian, const Eigen::VectorXd& residuals, double damping) {
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(jacobian.cols(), jacobian.cols());
    A.selfadjointView<Eigen::Lower>().rankUpdate(jacobian.transpose());
    A.diagonal().array() += damping;
    const Eigen::VectorXd g = jacobian.transpose() * residuals;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(A.selfadjointView<Eigen::Lower>());
    if (ldlt.info() != Eigen::Success) throw TrainingError(kModule, "normal equations could not be factored");
    return ldlt.solve(-g);
}

void randomize(SocNetwork& network, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (auto& l : network.layers()) {
        const double limit = std::sqrt(6.0 / static_cast<double>(l.weights.rows() + l.weights.cols()));
        std::uniform_real_distribution<double> u(-limit, limit);
        for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
            for (Eigen::Index c = 0; c < l.weights.cols(); ++c) l.weights(r, c) = u(rng);
        l.bias.setZero();
    }
}

std::pair<SocNetwork, TrainReport> train(std::span<const LabeledRow> dataset, const SplitConfig& split,
                                         const LmConfig& lm) {
    if (dataset.empty()) throw DomainError(kModule, "empty training dataset");
    const std::size_t d = dataset.front().features.size();
    for (const auto& row : dataset) {
        if (row.features.size() != d) throw DomainError(kModule, "ragged feature rows");
        if (!(row.target >= 0.0 && row.target <= 100.0)) throw DomainError(kModule, "targets must lie in [0, 100]");
    }
    if (split.train <= 0.0 || split.validation < 0.0 || split.test < 0.0 ||
        split.train + split.validation + split.test > 1.0 + 1e-12)
        throw DomainError(kModule, "split fractions must be non-negative and sum to at most 1");

    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffler(split.seed);
    std::shuffle(order.begin(), order.end(), shuffler);
    const auto n = static_cast<double>(dataset.size());
    const auto n_train = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(split.train * n)));
    const auto n_val = std::min(dataset.size() - n_train, static_cast<std::size_t>(std::floor(split.validation * n)));
    const auto n_test = std::min(dataset.size() - n_train - n_val, static_cast<std::size_t>(std::ceil(split.test * n - 1e-9)));
    std::span<const std::size_t> train_idx(order.data(), n_train);
    std::span<const std::size_t> val_idx(order.data() + n_train, n_val);
    std::span<const std::size_t> test_idx(order.data() + n_train + n_val, n_test);

    std::vector<std::size_t> sizes{d};
    sizes.insert(sizes.end(), lm.hidden.begin(), lm.hidden.end());
    sizes.push_back(1);
    SocNetwork net(sizes, lm.hidden_activation);
    net.window = lm.window;
    net.full_charge = lm.full_charge;

    std::vector<std::vector<double>> train_rows;
    train_rows.reserve(n_train);
    for (auto i : train_idx) train_rows.push_back(dataset[i].features);
    net.normalization = Normalization::fit(train_rows);
    randomize(net, lm.seed);

    const Eigen::MatrixXd X = to_matrix(dataset, train_idx, net.normalization);
    const Eigen::VectorXd y = targets(dataset, train_idx);
    const Eigen::MatrixXd Xv = to_matrix(dataset, val_idx, net.normalization);
    const Eigen::VectorXd yv = targets(dataset, val_idx);
    net.layers().back().bias(0) = y.mean();

    TrainReport report;
    report.seed = lm.seed;
    report.small_dataset_warning = n_train < 10 * net.parameter_count();

    auto sse = [&](const SocNetwork& m) { return (m.forward_batch(X) - y).squaredNorm(); };
    auto val_rmse = [&](const SocNetwork& m) {
        if (Xv.cols() == 0) return 0.0;
        Eigen::VectorXd p = m.forward_batch(Xv).cwiseMax(0.0).cwiseMin(100.0);
        return std::sqrt((p - yv).squaredNorm() / static_cast<double>(Xv.cols()));
    };

    Eigen::VectorXd theta = net.parameters();
    Eigen::VectorXd best_theta = theta;
    double loss = sse(net);
    double best_val = val_rmse(net);
    std::size_t fails = 0;
    double mu = lm.damping_initial;
    report.loss_history.push_back(loss);
    report.stop_reason = "max_epochs";

    Eigen::MatrixXd J;
    std::size_t epoch = 0;
    for (; epoch < lm.max_epochs; ++epoch) {
        net.set_parameters(theta);
        const Eigen::VectorXd r = net.forward_batch(X, &J) - y;
        const Eigen::VectorXd g = J.transpose() * r;
        if (g.cwiseAbs().maxCoeff() < lm.min_gradient) {
            report.stop_reason = "min_gradient";
            break;
        }
        Eigen::MatrixXd H = Eigen::MatrixXd::Zero(J.cols(), J.cols());
        H.selfadjointView<Eigen::Lower>().rankUpdate(J.transpose());

        bool accepted = false;
        bool factored_once = false;
        while (mu <= lm.damping_max) {
            Eigen::MatrixXd A = H;
            A.diagonal().array() += mu;
            Eigen::LLT<Eigen::MatrixXd> llt(A.selfadjointView<Eigen::Lower>());
            if (llt.info() == Eigen::Success) {
                factored_once = true;
                const Eigen::VectorXd step = llt.solve(-g);
                SocNetwork trial = net;
                trial.set_parameters(theta + step);
                const double trial_loss = step.allFinite() ? sse(trial) : std::numeric_limits<double>::infinity();
                if (trial_loss < loss) {
                    theta += step;
                    loss = trial_loss;
                    mu /= lm.damping_decrease;
                    accepted = true;
                    break;
                }
            }
            mu *= lm.damping_increase;
        }
        if (!accepted) {
            if (!factored_once) throw TrainingError(kModule, "normal equations singular at maximum damping");
            report.stop_reason = "max_damping";
            break;
        }
        report.loss_history.push_back(loss);

        net.set_parameters(theta);
        const double v = val_rmse(net);
        if (Xv.cols() == 0 || v < best_val) {
            best_val = v;
            best_theta = theta;
            fails = 0;
        } else if (++fails >= lm.patience) {
            report.stop_reason = "validation_patience";
            ++epoch;
            break;
        }
    }
    if (Xv.cols() == 0) best_theta = theta;
    net.set_parameters(best_theta);
    report.epochs = epoch;
    report.final_damping = mu;
    report.train = evaluate_subset(net, dataset, train_idx);
    report.validation = evaluate_subset(net, dataset, val_idx);
    report.test = evaluate_subset(net, dataset, test_idx);
    return {std::move(net), std::move(report)};
}

// ---------------------------------------------------------------------------

std::string network_to_json(const SocNetwork& net) {
    nlohmann::json j;
    j["format"] = "battkit.soc_network";
    j["version"] = kModelVersion;
    j["layer_sizes"] = net.layer_sizes();
    auto layers = nlohmann::json::array();
    for (const auto& l : net.layers()) {
        nlohmann::json lj;
        lj["activation"] = to_string(l.activation);
        std::vector<double> w;
        for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
            for (Eigen::Index c = 0; c < l.weights.cols(); ++c) w.push_back(l.weights(r, c));
        lj["weights"] = w;
        lj["bias"] = std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size());
        layers.push_back(lj);
    }
    j["layers"] = layers;
    j["normalization"] = {{"mean", net.normalization.mean}, {"scale", net.normalization.scale}};
    j["window"] = {{"dt_s", net.window.dt_s}, {"history", net.window.history}, {"downsample_s", net.window.downsample_s}};
    if (net.full_charge) {
        j["full_charge"] = {{"cell_voltage", net.full_charge->cell_voltage},
                            {"taper_c_rate", net.full_charge->taper_c_rate},
                            {"capacity_ah", net.full_charge->capacity_ah}};
    } else {
        j["full_charge"] = nullptr;
    }
    j["output_clamp"] = {0.0, 100.0};
    return j.dump(1);
}

SocNetwork network_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded() || j.value("format", "") != "battkit.soc_network")
        throw DomainError(kModule, "not a battkit SOC network file");
    if (j.value("version", 0) != kModelVersion)
        throw DomainError(kModule, "unsupported network file version");
    try {
        const auto sizes = j.at("layer_sizes").get<std::vector<std::size_t>>();
        const auto& layers = j.at("layers");
        if (layers.size() + 1 != sizes.size()) throw DomainError(kModule, "layer count mismatch in network file");
        SocNetwork net(sizes, Activation::tanh);
        for (std::size_t l = 0; l < layers.size(); ++l) {
            auto& L = net.layers()[l];
            L.activation = activation_from_string(layers[l].at("activation").get<std::string>());
            const auto w = layers[l].at("weights").get<std::vector<double>>();
            const auto b = layers[l].at("bias").get<std::vector<double>>();
            if (w.size() != static_cast<std::size_t>(L.weights.size()) || b.size() != static_cast<std::size_t>(L.bias.size()))
                throw DomainError(kModule, "weight array size mismatch in network file");
            std::size_t k = 0;
            for (Eigen::Index r = 0; r < L.weights.rows(); ++r)
                for (Eigen::Index c = 0; c < L.weights.cols(); ++c) L.weights(r, c) = w[k++];
            for (Eigen::Index r = 0; r < L.bias.size(); ++r) L.bias(r) = b[static_cast<std::size_t>(r)];
        }
        net.normalization.mean = j.at("normalization").at("mean").get<std::vector<double>>();
        net.normalization.scale = j.at("normalization").at("scale").get<std::vector<double>>();
        const auto& w = j.at("window");
        net.window.dt_s = w.at("dt_s").get<double>();
        net.window.history = w.at("history").get<std::size_t>();
        net.window.downsample_s = w.at("downsample_s").get<double>();
        if (!j.at("full_charge").is_null()) {
            const auto& f = j["full_charge"];
            net.full_charge = FullChargeRule{f.at("cell_voltage").get<double>(), f.at("taper_c_rate").get<double>(),
                                             f.at("capacity_ah").get<double>()};
        }
        net.validate();
        return net;
    } catch (const nlohmann::json::exception& e) {
        throw DomainError(kModule, std::string("malformed network file: ") + e.what());
    }
}

void save_network(const SocNetwork& network, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(kModule, "cannot write " + path);
    out << network_to_json(network) << '\n';
}

SocNetwork load_network(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError(kModule, "cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return network_from_json(ss.str());
}

} // namespace battkit::soc
