#include "battkit/soh.hpp"

#include "battkit/error.hpp"
#include "battkit/signal.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <memory>
#include <ostream>
#include <set>
#include <sstream>

namespace battkit::soh {

namespace {

constexpr const char* kModule = "sohdva";
constexpr int kLutVersion = 1;

std::string fmt(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

double parse_double(const std::string& s) {
    double v = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw DomainError(kModule, "bad number '" + s + "' in LUT file");
    return v;
}

} // namespace

double soh_c(double q_dis_max_ah, double c_n_ah) {
    if (!(c_n_ah > 0.0)) throw DomainError(kModule, "nominal capacity must be positive");
    if (!(q_dis_max_ah >= 0.0)) throw DomainError(kModule, "discharge capacity must be non-negative");
    return 100.0 * q_dis_max_ah / c_n_ah;
}

GateDecision gate_segment(const telemetry::ChargeSegment& segment, const GateConfig& config) {
    GateDecision d;
    d.mean_c_rate = segment.mean_c_rate();
    d.charge_fraction = segment.nominal_capacity() > 0.0 ? segment.charge_throughput() / segment.nominal_capacity() : 0.0;
    d.mean_temperature = segment.mean_temperature();
    if (d.mean_c_rate > config.max_c_rate + config.c_rate_tolerance) {
        d.reason = "c-rate";
    } else if (d.charge_fraction < config.min_charge_fraction) {
        d.reason = "insufficient charge span";
    } else if ((config.temperature_min && d.mean_temperature < *config.temperature_min) ||
               (config.temperature_max && d.mean_temperature > *config.temperature_max)) {
        d.reason = "temperature";
    } else {
        d.accepted = true;
        d.reason = "ok";
    }
    return d;
}

// ---------------------------------------------------------------------------

DifferentialCurves differential_curves(std::span<const double> t, std::span<const double> current,
                                       std::span<const double> voltage, double nominal_capacity_ah,
                                       double mean_temperature, const DiffConfig& config) {
    if (!(nominal_capacity_ah > 0.0)) throw DomainError(kModule, "nominal capacity must be positive");
    if (t.size() != current.size() || t.size() != voltage.size())
        throw DomainError(kModule, "time, current and voltage lengths differ");
    if (t.size() < 3) throw InsufficientDataError(kModule, "segment has fewer than three samples");

    // Drop the CV tail: everything after the voltage first reaches its plateau.
    const double vmax = *std::max_element(voltage.begin(), voltage.end());
    std::size_t end = t.size() - 1;
    for (std::size_t k = 0; k < voltage.size(); ++k)
        if (voltage[k] >= vmax - config.cv_tolerance_v) {
            end = k;
            break;
        }

    std::vector<double> q(end + 1, 0.0);
    for (std::size_t k = 1; k <= end; ++k) q[k] = q[k - 1] + 0.5 * (current[k - 1] + current[k]) * (t[k] - t[k - 1]) / 3600.0;

    const double bin = config.bin_ah > 0.0 ? config.bin_ah : nominal_capacity_ah / 200.0;
    const auto bins = static_cast<std::size_t>(std::floor((q[end] - q[0]) / bin));
    // Only complete bins; the partial last one is dropped.
    std::vector<double> sum_q(bins, 0.0), sum_v(bins, 0.0);
    std::vector<std::size_t> count(bins, 0);
    for (std::size_t k = 0; k <= end; ++k) {
        const auto j = static_cast<std::size_t>(std::floor((q[k] - q[0]) / bin));
        if (j >= bins) continue;
        sum_q[j] += q[k];
        sum_v[j] += voltage[k];
        ++count[j];
    }
    std::vector<double> bq, bv;
    for (std::size_t j = 0; j < bins; ++j) {
        if (count[j] == 0) continue;
        bq.push_back(sum_q[j] / static_cast<double>(count[j]));
        bv.push_back(sum_v[j] / static_cast<double>(count[j]));
    }
    if (bq.size() < std::max<std::size_t>(config.min_bins, config.sg_window) + 1)
        throw InsufficientDataError(kModule, "too few charge bins for differential analysis");

    DifferentialCurves c;
    const std::size_t m = bq.size() - 1;
    std::vector<double> dq(m), raw(m);
    c.q_axis.resize(m);
    c.v_axis.resize(m);
    c.delta_v.resize(m);
    c.dv_mask.assign(m, false);
    for (std::size_t j = 0; j < m; ++j) {
        dq[j] = bq[j + 1] - bq[j];
        c.delta_v[j] = bv[j + 1] - bv[j];
        c.q_axis[j] = 0.5 * (bq[j] + bq[j + 1]) - q[0];
        c.v_axis[j] = 0.5 * (bv[j] + bv[j + 1]);
        if (std::abs(dq[j]) < config.epsilon) {
            c.dv_mask[j] = true;
            raw[j] = 0.0;
        } else {
            raw[j] = c.delta_v[j] / dq[j];
        }
    }
    c.dv = signal::savitzky_golay(raw, config.sg_window, config.sg_order);
    c.ic.assign(m, 0.0);
    c.ic_mask.assign(m, false);
    std::size_t usable = 0;
    for (std::size_t j = 0; j < m; ++j) {
        if (c.dv_mask[j]) c.dv[j] = 0.0;
        const double smoothed_dv_step = c.dv[j] * dq[j];
        if (c.dv_mask[j] || !(smoothed_dv_step >= config.epsilon)) {
            c.ic_mask[j] = true;
        } else {
            c.ic[j] = 1.0 / c.dv[j];
            ++usable;
        }
        if (!std::isfinite(c.dv[j]) || !std::isfinite(c.ic[j])) throw DomainError(kModule, "non-finite differential curve value");
    }
    if (usable < config.min_bins) throw InsufficientDataError(kModule, "too few unmasked bins after differencing");

    c.smoothing = {config.sg_window, config.sg_order, bin};
    c.nominal_capacity = nominal_capacity_ah;
    c.cc_charge_ah = q[end] - q[0];
    const double span_s = t[end] - t[0];
    c.mean_c_rate = span_s > 0.0 ? c.cc_charge_ah / (span_s / 3600.0) / nominal_capacity_ah : 0.0;
    c.mean_temperature = mean_temperature;
    return c;
}

DifferentialCurves differential_curves(const telemetry::ChargeSegment& segment, const DiffConfig& config) {
    std::vector<double> t, i, v;
    for (const auto& s : segment.samples()) {
        const auto cur = s.current();
        const auto volt = s.mean_cell_voltage();
        if (!cur || !volt) continue;
        t.push_back(s.timestamp);
        i.push_back(*cur);
        v.push_back(*volt);
    }
    return differential_curves(t, i, v, segment.nominal_capacity(), segment.mean_temperature(), config);
}

double integrate_ic(const DifferentialCurves& curves) {
    double total = 0.0;
    for (std::size_t j = 0; j < curves.size(); ++j)
        if (!curves.ic_mask[j]) total += curves.ic[j] * curves.delta_v[j];
    return total;
}

void write_curve(std::ostream& out, const DifferentialCurves& curves, CurveKind kind) {
    out << (kind == CurveKind::dv ? "# q_ah dv_v_per_ah\n" : "# v_volt ic_ah_per_v\n");
    for (std::size_t j = 0; j < curves.size(); ++j) {
        if (kind == CurveKind::dv) {
            if (!curves.dv_mask[j]) out << fmt(curves.q_axis[j]) << ' ' << fmt(curves.dv[j]) << '\n';
        } else if (!curves.ic_mask[j]) {
            out << fmt(curves.v_axis[j]) << ' ' << fmt(curves.ic[j]) << '\n';
        }
    }
}

// ---------------------------------------------------------------------------

FeatureConfig FeatureConfig::defaults() {
    FeatureConfig c;
    c.features.push_back({"dv_peak_distance_top", FeatureKind::distance, CurveKind::dv, ExtremumKind::peak, -2, -1, true});
    c.features.push_back({"dv_peak_distance_low", FeatureKind::distance, CurveKind::dv, ExtremumKind::peak, -3, -2, false});
    // Noise bumps on the DV baseline reach about 0.14; the top of charge is
    // flat and only produces those.
    c.dv_min_prominence = 0.18;
    c.voltage_max = 4.05;
    return c;
}

DvaFeatureSet extract_features(const DifferentialCurves& curves, const FeatureConfig& config) {
    if (!(curves.nominal_capacity > 0.0)) throw DomainError(kModule, "curves lack a nominal capacity");
    const std::size_t m = curves.size();
    std::vector<bool> dv_mask(m), ic_mask(m);
    for (std::size_t j = 0; j < m; ++j) {
        const bool outside = curves.v_axis[j] < config.voltage_min || curves.v_axis[j] > config.voltage_max;
        dv_mask[j] = curves.dv_mask[j] || outside;
        ic_mask[j] = curves.ic_mask[j] || outside;
    }
    // std::vector<bool> has no contiguous storage; spans need real bools.
    const std::unique_ptr<bool[]> dvm(new bool[m]), icm(new bool[m]);
    for (std::size_t j = 0; j < m; ++j) {
        dvm[j] = dv_mask[j];
        icm[j] = ic_mask[j];
    }
    const double cn = curves.nominal_capacity;
    const signal::PeakConfig dv_cfg{config.dv_min_prominence / cn, config.min_separation};
    const signal::PeakConfig ic_cfg{config.ic_min_prominence * cn, config.min_separation};

    DvaFeatureSet out;
    out.mean_temperature = curves.mean_temperature;
    out.mean_c_rate = curves.mean_c_rate;
    std::map<std::pair<CurveKind, ExtremumKind>, std::vector<Landmark>> by_kind;
    auto collect = [&](CurveKind ck, ExtremumKind ek, const std::vector<signal::Extremum>& found) {
        auto& list = by_kind[{ck, ek}];
        for (const auto& e : found) {
            Landmark l{curves.q_axis[e.index], curves.v_axis[e.index], e.height, e.prominence, ck, ek, e.index};
            list.push_back(l);
            (ek == ExtremumKind::peak ? out.peaks : out.valleys).push_back(l);
        }
    };
    collect(CurveKind::dv, ExtremumKind::peak, signal::find_peaks(curves.dv, dv_cfg, {dvm.get(), m}));
    collect(CurveKind::dv, ExtremumKind::valley, signal::find_valleys(curves.dv, dv_cfg, {dvm.get(), m}));
    collect(CurveKind::ic, ExtremumKind::peak, signal::find_peaks(curves.ic, ic_cfg, {icm.get(), m}));
    collect(CurveKind::ic, ExtremumKind::valley, signal::find_valleys(curves.ic, ic_cfg, {icm.get(), m}));

    const auto& dv_peaks = by_kind[{CurveKind::dv, ExtremumKind::peak}];
    for (std::size_t i = 1; i < dv_peaks.size(); ++i) out.pairwise_distances.push_back(dv_peaks[i].q - dv_peaks[i - 1].q);

    for (const auto& f : config.features) {
        const auto& list = by_kind[{f.curve, f.extremum}];
        auto resolve = [&](int ordinal) -> const Landmark* {
            const auto n = static_cast<long>(list.size());
            const long idx = ordinal > 0 ? ordinal - 1 : n + ordinal;
            if (ordinal == 0 || idx < 0 || idx >= n) return nullptr;
            return &list[static_cast<std::size_t>(idx)];
        };
        auto loc = [&](const Landmark& l) { return f.curve == CurveKind::dv ? l.q : l.v; };
        const Landmark* a = resolve(f.ordinal_a);
        const Landmark* b = f.kind == FeatureKind::distance ? resolve(f.ordinal_b) : a;
        if (!a || !b) {
            if (f.required) throw FeatureMissingError(kModule, "feature '" + f.id + "' not found on the curves");
            continue;
        }
        switch (f.kind) {
        case FeatureKind::distance: out.values[f.id] = std::abs(loc(*b) - loc(*a)); break;
        case FeatureKind::height: out.values[f.id] = a->height; break;
        case FeatureKind::location: out.values[f.id] = loc(*a); break;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

std::vector<std::string> SohLut::feature_ids() const {
    std::vector<std::string> ids;
    for (const auto& r : rows)
        if (ids.empty() || ids.back() != r.feature) ids.push_back(r.feature);
    return ids;
}

double SohLut::temperature_min() const {
    if (rows.empty()) throw DomainError(kModule, "empty LUT");
    double t = rows.front().temperature;
    for (const auto& r : rows) t = std::min(t, r.temperature);
    return t;
}

double SohLut::temperature_max() const {
    if (rows.empty()) throw DomainError(kModule, "empty LUT");
    double t = rows.front().temperature;
    for (const auto& r : rows) t = std::max(t, r.temperature);
    return t;
}

SohLut build_lut(std::span<const CalibrationSample> samples, const FeatureConfig& features, const LutConfig& config) {
    if (samples.empty()) throw CalibrationError(kModule, "no calibration samples");
    if (!(config.temperature_step > 0.0)) throw DomainError(kModule, "temperature step must be positive");
    for (const auto& f : features.features)
        if (f.id.empty() || f.id.find_first_of(" \t\n") != std::string::npos)
            throw DomainError(kModule, "feature ids must be non-empty and contain no whitespace");

    std::map<double, std::vector<const CalibrationSample*>> by_temp;
    for (const auto& s : samples)
        by_temp[std::round(s.temperature / config.temperature_step) * config.temperature_step].push_back(&s);
    for (const auto& [temp, group] : by_temp) {
        std::set<double> levels;
        for (const auto* s : group) levels.insert(std::round(s->soh * 1e6) / 1e6);
        if (levels.size() < config.min_levels)
            throw CalibrationError(kModule, "fewer than " + std::to_string(config.min_levels) +
                                                " distinct SOH levels at " + fmt(temp) + " degC");
    }

    SohLut lut;
    lut.features = features;
    for (const auto& f : features.features) {
        std::vector<LutRow> rows;
        bool ok = true;
        for (const auto& [temp, group] : by_temp) {
            std::vector<double> x, y;
            for (const auto* s : group)
                if (auto it = s->features.values.find(f.id); it != s->features.values.end()) {
                    x.push_back(it->second);
                    y.push_back(s->soh);
                }
            if (x.size() < 3) {
                ok = false;
                break;
            }
            const double n = static_cast<double>(x.size());
            double mx = 0.0, my = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) {
                mx += x[i];
                my += y[i];
            }
            mx /= n;
            my /= n;
            double sxx = 0.0, sxy = 0.0, syy = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) {
                sxx += (x[i] - mx) * (x[i] - mx);
                sxy += (x[i] - mx) * (y[i] - my);
                syy += (y[i] - my) * (y[i] - my);
            }
            LutRow r;
            r.feature = f.id;
            r.temperature = temp;
            r.count = x.size();
            r.feature_min = *std::min_element(x.begin(), x.end());
            r.feature_max = *std::max_element(x.begin(), x.end());
            if (sxx > 0.0) {
                r.slope = sxy / sxx;
                r.intercept = my - r.slope * mx;
            } else {
                r.intercept = my;
            }
            double ssr = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) {
                const double e = y[i] - (r.intercept + r.slope * x[i]);
                ssr += e * e;
            }
            r.r2 = syy > 0.0 ? 1.0 - ssr / syy : 0.0;
            r.residual_variance = ssr / (n - 2.0);
            if (!(r.r2 >= config.r2_threshold)) ok = false;
            rows.push_back(r);
        }
        if (ok) {
            lut.rows.insert(lut.rows.end(), rows.begin(), rows.end());
        } else {
            lut.excluded.push_back(f.id);
        }
    }
    if (lut.rows.empty()) throw CalibrationError(kModule, "no feature meets the R2 threshold");
    return lut;
}

SohEstimate estimate_soh(const DvaFeatureSet& features, const SohLut& lut, const EstimateConfig& config) {
    SohEstimate est;
    bool extrapolated = false;
    const double T = features.mean_temperature;
    for (const auto& id : lut.feature_ids()) {
        const auto it = features.values.find(id);
        if (it == features.values.end()) continue;
        const double f = it->second;
        std::vector<const LutRow*> rows;
        for (const auto& r : lut.rows)
            if (r.feature == id) rows.push_back(&r);
        std::sort(rows.begin(), rows.end(), [](const LutRow* a, const LutRow* b) { return a->temperature < b->temperature; });

        const LutRow* lo = rows.front();
        const LutRow* hi = rows.front();
        double alpha = 0.0;
        bool extra = false;
        if (T <= rows.front()->temperature) {
            extra = T < rows.front()->temperature - 1e-9;
        } else if (T >= rows.back()->temperature) {
            lo = hi = rows.back();
            extra = T > rows.back()->temperature + 1e-9;
        } else {
            for (std::size_t i = 1; i < rows.size(); ++i) {
                if (T <= rows[i]->temperature) {
                    lo = rows[i - 1];
                    hi = rows[i];
                    alpha = (T - lo->temperature) / (hi->temperature - lo->temperature);
                    break;
                }
            }
        }
        const double fmin = (1.0 - alpha) * lo->feature_min + alpha * hi->feature_min;
        const double fmax = (1.0 - alpha) * lo->feature_max + alpha * hi->feature_max;
        if (f < fmin || f > fmax) extra = true;

        FeatureContribution c;
        c.feature = id;
        c.value = f;
        c.soh = (1.0 - alpha) * (lo->intercept + lo->slope * f) + alpha * (hi->intercept + hi->slope * f);
        c.variance = std::max(config.variance_floor,
                              (1.0 - alpha) * lo->residual_variance + alpha * hi->residual_variance);
        c.weight = 1.0 / c.variance;
        c.extrapolated = extra;
        extrapolated = extrapolated || extra;
        est.contributions.push_back(c);
    }
    if (est.contributions.empty()) throw EstimationError(kModule, "no usable feature for the SOH lookup");

    double wsum = 0.0, acc = 0.0;
    for (const auto& c : est.contributions) wsum += c.weight;
    for (auto& c : est.contributions) {
        c.weight /= wsum;
        acc += c.weight * c.soh;
    }
    if (!(acc > 0.0)) throw EstimationError(kModule, "SOH estimate is not positive");
    if (acc > config.ceiling) {
        acc = config.ceiling;
        extrapolated = true;
    }
    est.soh_c = acc;
    if (features.mean_c_rate > config.max_c_rate + config.c_rate_tolerance)
        est.confidence = Confidence::degraded_by_c_rate;
    else if (extrapolated)
        est.confidence = Confidence::extrapolated;
    return est;
}

// ---------------------------------------------------------------------------

const char* to_string(Confidence c) {
    switch (c) {
    case Confidence::in_range: return "in-range";
    case Confidence::extrapolated: return "extrapolated";
    case Confidence::degraded_by_c_rate: return "degraded-by-c-rate";
    }
    return "in-range";
}

const char* to_string(CurveKind c) { return c == CurveKind::dv ? "dv" : "ic"; }

const char* to_string(FeatureKind k) {
    switch (k) {
    case FeatureKind::distance: return "distance";
    case FeatureKind::height: return "height";
    case FeatureKind::location: return "location";
    }
    return "distance";
}

const char* to_string(ExtremumKind k) { return k == ExtremumKind::peak ? "peak" : "valley"; }

namespace {

FeatureKind feature_kind_from(const std::string& s) {
    if (s == "distance") return FeatureKind::distance;
    if (s == "height") return FeatureKind::height;
    if (s == "location") return FeatureKind::location;
    throw DomainError(kModule, "unknown feature kind '" + s + "'");
}

CurveKind curve_from(const std::string& s) {
    if (s == "dv") return CurveKind::dv;
    if (s == "ic") return CurveKind::ic;
    throw DomainError(kModule, "unknown curve '" + s + "'");
}

ExtremumKind extremum_from(const std::string& s) {
    if (s == "peak") return ExtremumKind::peak;
    if (s == "valley") return ExtremumKind::valley;
    throw DomainError(kModule, "unknown extremum '" + s + "'");
}

} // namespace

void write_lut(std::ostream& out, const SohLut& lut) {
    const auto& f = lut.features;
    out << "battkit-soh-lut " << kLutVersion << '\n';
    out << "# peaks dv_min_prominence ic_min_prominence min_separation voltage_min voltage_max\n";
    out << "peaks " << fmt(f.dv_min_prominence) << ' ' << fmt(f.ic_min_prominence) << ' ' << f.min_separation << ' '
        << fmt(f.voltage_min) << ' ' << fmt(f.voltage_max) << '\n';
    out << "# feature id kind curve extremum ordinal_a ordinal_b required\n";
    for (const auto& s : f.features)
        out << "feature " << s.id << ' ' << to_string(s.kind) << ' ' << to_string(s.curve) << ' ' << to_string(s.extremum)
            << ' ' << s.ordinal_a << ' ' << s.ordinal_b << ' ' << (s.required ? 1 : 0) << '\n';
    out << "# row feature temperature slope intercept r2 residual_variance feature_min feature_max count\n";
    for (const auto& r : lut.rows)
        out << "row " << r.feature << ' ' << fmt(r.temperature) << ' ' << fmt(r.slope) << ' ' << fmt(r.intercept) << ' '
            << fmt(r.r2) << ' ' << fmt(r.residual_variance) << ' ' << fmt(r.feature_min) << ' ' << fmt(r.feature_max)
            << ' ' << r.count << '\n';
    for (const auto& e : lut.excluded) out << "excluded " << e << '\n';
}

SohLut read_lut(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw DomainError(kModule, "empty LUT file");
    {
        std::istringstream head(line);
        std::string magic;
        int version = 0;
        head >> magic >> version;
        if (magic != "battkit-soh-lut") throw DomainError(kModule, "not a battkit SOH LUT file");
        if (version != kLutVersion) throw DomainError(kModule, "unsupported LUT version");
    }
    SohLut lut;
    lut.features.features.clear();
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::vector<std::string> tok;
        for (std::string t; ls >> t;) tok.push_back(t);
        if (tok.empty()) continue;
        try {
            if (tok[0] == "peaks" && tok.size() == 6) {
                lut.features.dv_min_prominence = parse_double(tok[1]);
                lut.features.ic_min_prominence = parse_double(tok[2]);
                lut.features.min_separation = std::stoul(tok[3]);
                lut.features.voltage_min = parse_double(tok[4]);
                lut.features.voltage_max = parse_double(tok[5]);
            } else if (tok[0] == "feature" && tok.size() == 8) {
                lut.features.features.push_back({tok[1], feature_kind_from(tok[2]), curve_from(tok[3]),
                                                 extremum_from(tok[4]), std::stoi(tok[5]), std::stoi(tok[6]),
                                                 tok[7] == "1"});
            } else if (tok[0] == "row" && tok.size() == 10) {
                LutRow r;
                r.feature = tok[1];
                r.temperature = parse_double(tok[2]);
                r.slope = parse_double(tok[3]);
                r.intercept = parse_double(tok[4]);
                r.r2 = parse_double(tok[5]);
                r.residual_variance = parse_double(tok[6]);
                r.feature_min = parse_double(tok[7]);
                r.feature_max = parse_double(tok[8]);
                r.count = std::stoul(tok[9]);
                lut.rows.push_back(r);
            } else if (tok[0] == "excluded" && tok.size() == 2) {
                lut.excluded.push_back(tok[1]);
            } else {
                throw DomainError(kModule, "unrecognised LUT line: " + line);
            }
        } catch (const std::logic_error&) {
            throw DomainError(kModule, "malformed LUT line: " + line);
        }
    }
    if (lut.rows.empty()) throw DomainError(kModule, "LUT file has no rows");
    return lut;
}

void save_lut(const SohLut& lut, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(kModule, "cannot write " + path);
    write_lut(out, lut);
}

SohLut load_lut(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError(kModule, "cannot open " + path);
    return read_lut(in);
}

} // namespace battkit::soh
