#include "battkit/kshape.hpp"

#include "battkit/error.hpp"
#include "battkit/sbd.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace battkit::thermal {

namespace {

constexpr const char* kModule = "thermalwatch";
constexpr double kObjectiveSlack = 1e-12;

bool all_zero(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

/// SBD that treats an all-zero centroid as maximally distant.
double distance_to(std::span<const double> x, std::span<const double> centroid) {
    if (all_zero(centroid)) return 2.0;
    return sbd(x, centroid).distance;
}

struct Run {
    std::vector<std::vector<double>> centroids;
    std::vector<std::size_t> labels;
    std::vector<double> distances;
    double objective = 0.0;
};

void assign(const std::vector<std::vector<double>>& z, Run& run) {
    run.objective = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_c = 0;
        for (std::size_t c = 0; c < run.centroids.size(); ++c) {
            const double d = distance_to(z[i], run.centroids[c]);
            if (d < best) {
                best = d;
                best_c = c;
            }
        }
        run.labels[i] = best_c;
        run.distances[i] = best;
        run.objective += best;
    }
}

/// Moves the worst-fitting member of a multi-member cluster into each empty
/// cluster, which can only lower the objective.
void repair_empty(const std::vector<std::vector<double>>& z, Run& run) {
    const std::size_t k = run.centroids.size();
    for (std::size_t c = 0; c < k; ++c) {
        std::vector<std::size_t> counts(k, 0);
        for (auto l : run.labels) ++counts[l];
        if (counts[c] > 0) continue;
        std::size_t worst = z.size();
        double worst_d = -1.0;
        for (std::size_t i = 0; i < z.size(); ++i) {
            if (counts[run.labels[i]] > 1 && run.distances[i] > worst_d) {
                worst_d = run.distances[i];
                worst = i;
            }
        }
        if (worst == z.size()) continue;
        run.objective -= run.distances[worst];
        run.labels[worst] = c;
        run.distances[worst] = 0.0;
        run.centroids[c] = z[worst];
    }
}

void refine_centroids(const std::vector<std::vector<double>>& z, Run& run) {
    for (std::size_t c = 0; c < run.centroids.size(); ++c) {
        std::vector<std::vector<double>> members;
        for (std::size_t i = 0; i < z.size(); ++i)
            if (run.labels[i] == c) members.push_back(z[i]);
        if (members.empty()) continue;
        run.centroids[c] = shape_extract(members, run.centroids[c]);
    }
}

double objective_for(const std::vector<std::vector<double>>& z, const Run& run) {
    double total = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) total += distance_to(z[i], run.centroids[run.labels[i]]);
    return total;
}

} // namespace

std::vector<double> shape_extract(std::span<const std::vector<double>> members, std::span<const double> reference) {
    if (members.empty()) return std::vector<double>(reference.size(), 0.0);
    const std::size_t n = members.front().size();
    const bool use_ref = reference.size() == n && !all_zero(reference);

    std::vector<std::vector<double>> aligned;
    aligned.reserve(members.size());
    for (const auto& m : members) {
        if (m.size() != n) throw DomainError(kModule, "shape extraction needs equal-length members");
        auto z = znormalize(m);
        if (z.is_static) continue;
        if (use_ref) {
            const int w = sbd(reference, z.values).shift;
            aligned.push_back(align(z.values, w));
        } else {
            aligned.push_back(std::move(z.values));
        }
    }
    if (aligned.empty()) return std::vector<double>(n, 0.0);

    const auto N = static_cast<Eigen::Index>(n);
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(N, N);
    for (const auto& a : aligned) {
        const Eigen::Map<const Eigen::VectorXd> v(a.data(), N);
        S.selfadjointView<Eigen::Lower>().rankUpdate(v);
    }
    S = S.selfadjointView<Eigen::Lower>();
    const Eigen::MatrixXd Q = Eigen::MatrixXd::Identity(N, N) - Eigen::MatrixXd::Constant(N, N, 1.0 / static_cast<double>(n));
    const Eigen::MatrixXd M = Q.transpose() * S * Q;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(M);
    if (eig.info() != Eigen::Success) throw DomainError(kModule, "shape extraction eigen-solve failed");
    const Eigen::VectorXd top = eig.eigenvectors().col(N - 1);

    std::vector<double> c(top.data(), top.data() + N);
    auto z = znormalize(c);
    if (z.is_static) return std::vector<double>(n, 0.0);
    c = std::move(z.values);

    double orient = 0.0;
    for (const auto& a : aligned) orient += dot(c, a);
    if (std::abs(orient) <= 1e-12 && use_ref) orient = dot(c, reference);
    if (std::abs(orient) <= 1e-12) {
        const auto it = std::find_if(c.begin(), c.end(), [](double x) { return x != 0.0; });
        orient = it == c.end() ? 1.0 : *it;
    }
    if (orient < 0.0)
        for (auto& x : c) x = -x;
    return c;
}

KShapeResult kshape_cluster(std::span<const std::vector<double>> series, const KShapeConfig& config) {
    if (config.k == 0) throw DomainError(kModule, "k must be positive");
    if (series.size() < config.k) throw DomainError(kModule, "k exceeds the number of non-static windows");
    const std::size_t n = series.front().size();
    std::vector<std::vector<double>> z;
    z.reserve(series.size());
    for (const auto& s : series) {
        if (s.size() != n) throw DomainError(kModule, "windows must share one length");
        auto zn = znormalize(s);
        if (zn.is_static) throw DomainError(kModule, "static window passed to clustering");
        z.push_back(std::move(zn.values));
    }

    std::mt19937_64 master(config.seed);
    KShapeResult best;
    best.objective = std::numeric_limits<double>::infinity();

    for (std::size_t r = 0; r < std::max<std::size_t>(1, config.restarts); ++r) {
        std::mt19937_64 rng(master());
        Run run;
        run.centroids.assign(config.k, std::vector<double>(n, 0.0));
        run.labels.assign(z.size(), 0);
        run.distances.assign(z.size(), 0.0);
        // Random labels with every cluster guaranteed a member.
        std::vector<std::size_t> perm(z.size());
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        std::uniform_int_distribution<std::size_t> pick(0, config.k - 1);
        for (std::size_t j = 0; j < perm.size(); ++j) run.labels[perm[j]] = j < config.k ? j : pick(rng);

        refine_centroids(z, run);
        assign(z, run);
        repair_empty(z, run);

        KShapeResult out;
        out.objective_history.push_back(run.objective);
        out.stop_reason = "max_iterations";
        std::size_t it = 0;
        for (; it < config.max_iterations; ++it) {
            Run next = run;
            refine_centroids(z, next);
            assign(z, next);
            repair_empty(z, next);
            if (next.objective > run.objective + kObjectiveSlack) {
                out.stop_reason = "objective_increase";
                break;
            }
            const bool stable = next.labels == run.labels;
            run = std::move(next);
            out.objective_history.push_back(run.objective);
            if (stable) {
                out.stop_reason = "converged";
                ++it;
                break;
            }
        }
        // The stored distances must describe the stored centroids exactly.
        run.objective = objective_for(z, run);
        for (std::size_t i = 0; i < z.size(); ++i) run.distances[i] = distance_to(z[i], run.centroids[run.labels[i]]);

        if (run.objective < best.objective - kObjectiveSlack) {
            out.centroids = std::move(run.centroids);
            out.labels = std::move(run.labels);
            out.distances = std::move(run.distances);
            out.objective = run.objective;
            out.iterations = it;
            best = std::move(out);
        }
    }
    return best;
}

} // namespace battkit::thermal
