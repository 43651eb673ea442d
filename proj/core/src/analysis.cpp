#include "serialprobe/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <set>

#include <fmt/format.h>

namespace serialprobe::analysis {

namespace {

// Continued fraction for the incomplete beta, modified Lentz.
double beta_cf(double a, double b, double x) {
    constexpr int kMaxIter = 10000;
    constexpr double kEps = 1e-16;
    constexpr double kTiny = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) return h;
    }
    return h;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += '"';
        out += ch;
    }
    return out + "\"";
}

std::string num(const std::optional<double>& v) { return v ? fmt::format("{}", *v) : std::string(); }
std::string num(double v) { return fmt::format("{}", v); }

struct CsvWriter {
    std::ofstream out;
    explicit CsvWriter(const std::filesystem::path& path) : out(path, std::ios::binary) {
        if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
    }
    void row(std::initializer_list<std::string> fields) {
        bool first = true;
        for (const auto& f : fields) {
            if (!first) out << ',';
            out << csv_field(f);
            first = false;
        }
        out << '\n';
    }
};

std::optional<double> mean_of(const std::vector<double>& v) {
    if (v.empty()) return std::nullopt;
    return mean(v);
}

}  // namespace

// ---- distributions ------------------------------------------------------------

double incomplete_beta(double a, double b, double x) {
    if (!(a > 0 && b > 0)) throw StatsError("incomplete_beta: a and b must be positive");
    if (x <= 0) return 0.0;
    if (x >= 1) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
    return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

double t_two_sided_p(double t, double df) {
    if (!(df > 0)) throw StatsError("t distribution needs df > 0");
    if (std::isinf(t)) return 0.0;
    // I_{df/(df+t^2)}(df/2, 1/2), with the tail evaluated directly to keep small p precise
    const double x = df / (df + t * t);
    return std::clamp(incomplete_beta(df / 2.0, 0.5, x), 0.0, 1.0);
}

double t_cdf(double t, double df) {
    const double tail = 0.5 * t_two_sided_p(t, df);
    return t >= 0 ? 1.0 - tail : tail;
}

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw StatsError("normal_quantile: p must be in (0, 1)");
    // work in the lower half, where erfc below keeps full relative precision; 1 - p is exact here
    if (p > 0.5) return -normal_quantile(1.0 - p);
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                   1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                   6.680131188771972e+01,  -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                   -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                   3.754408661907416e+00};
    constexpr double p_low = 0.02425;
    double x;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    }
    // Halley refinement brings the 1e-9 approximation to full double precision
    for (int i = 0; i < 2; ++i) {
        const double e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - p;
        const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(x * x / 2.0);
        x = x - u / (1.0 + x * u / 2.0);
    }
    return x;
}

// ---- estimators ---------------------------------------------------------------

double mean(std::span<const double> x) {
    if (x.empty()) throw StatsError("mean of an empty sample");
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double sample_sd(std::span<const double> x) {
    if (x.size() < 2) throw StatsError("sample sd needs at least 2 values");
    const double m = mean(x);
    double ss = 0;
    for (double v : x) ss += (v - m) * (v - m);
    return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

CorrelationResult pearson(std::span<const double> x, std::span<const double> y, std::string level) {
    if (x.size() != y.size()) throw StatsError("pearson: length mismatch");
    if (x.size() < 3) throw StatsError("pearson: n must be >= 3");
    const double mx = mean(x), my = mean(y);
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0 || syy == 0) throw ZeroVariance("pearson: zero variance");
    CorrelationResult out;
    out.n = x.size();
    out.level = std::move(level);
    out.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
    if (std::abs(out.r) >= 1.0) {
        out.p = 0.0;
    } else {
        const double df = static_cast<double>(out.n) - 2.0;
        const double t = out.r * std::sqrt(df / (1.0 - out.r * out.r));
        out.p = t_two_sided_p(t, df);
    }
    return out;
}

TTestResult ttest(std::span<const double> a, std::span<const double> b, bool paired) {
    if (a.size() < 2 || b.size() < 2) throw StatsError("ttest: each sample needs at least 2 values");
    TTestResult out;
    if (paired) {
        if (a.size() != b.size()) throw StatsError("paired ttest: length mismatch");
        std::vector<double> diff(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) diff[i] = a[i] - b[i];
        const double sd = sample_sd(diff);
        if (sd == 0) throw ZeroVariance("paired ttest: differences have zero variance");
        const double n = static_cast<double>(diff.size());
        out.t = mean(diff) / (sd / std::sqrt(n));
        out.df = n - 1.0;
    } else {
        const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
        const double va = std::pow(sample_sd(a), 2) / na, vb = std::pow(sample_sd(b), 2) / nb;
        if (va + vb == 0) throw ZeroVariance("welch ttest: both samples have zero variance");
        out.t = (mean(a) - mean(b)) / std::sqrt(va + vb);
        out.df = (va + vb) * (va + vb) / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    }
    out.p = t_two_sided_p(out.t, out.df);
    return out;
}

Interval wilson_ci(std::size_t successes, std::size_t n, double level) {
    if (n == 0) throw StatsError("wilson_ci: n must be >= 1");
    if (successes > n) throw StatsError("wilson_ci: successes > n");
    if (!(level > 0 && level < 1)) throw StatsError("wilson_ci: level must be in (0, 1)");
    const double z = normal_quantile(1.0 - (1.0 - level) / 2.0);
    const double nn = static_cast<double>(n);
    const double p = static_cast<double>(successes) / nn;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / nn;
    const double center = (p + z2 / (2.0 * nn)) / denom;
    const double half = z / denom * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn));
    Interval ci{std::max(0.0, center - half), std::min(1.0, center + half)};
    if (successes == 0) ci.low = 0.0;
    if (successes == n) ci.high = 1.0;
    return ci;
}

std::vector<double> zscore(std::span<const double> rts) {
    if (rts.size() < 2) throw DegenerateParticipant("fewer than 2 valid RTs");
    const double m = mean(rts);
    const double sd = sample_sd(rts);
    if (sd == 0) throw DegenerateParticipant("all RTs are equal");
    std::vector<double> z(rts.size());
    for (std::size_t i = 0; i < rts.size(); ++i) z[i] = (rts[i] - m) / sd;
    return z;
}

ZScoreResult zscore_rt(const std::vector<service::HumanResponse>& responses, const AnalysisOptions& options) {
    ZScoreResult out;
    out.records.resize(responses.size());
    std::map<std::string, std::vector<std::size_t>> by_participant;
    for (std::size_t i = 0; i < responses.size(); ++i) {
        const auto& r = responses[i];
        auto& z = out.records[i];
        z.participant = r.session_id;
        z.trial_id = r.trial_id;
        z.rt_ms = r.rt_ms;
        z.valid = std::isfinite(r.rt_ms) && r.rt_ms >= options.rt_min_ms && r.rt_ms <= options.rt_max_ms;
        if (z.valid) by_participant[r.session_id].push_back(i);
    }
    for (const auto& [participant, idx] : by_participant) {
        std::vector<double> rts;
        for (auto i : idx) rts.push_back(responses[i].rt_ms);
        try {
            const auto z = zscore(rts);
            for (std::size_t k = 0; k < idx.size(); ++k) out.records[idx[k]].z = z[k];
        } catch (const DegenerateParticipant&) {
            out.dropped.push_back(participant);
        }
    }
    return out;
}

// ---- pipeline -----------------------------------------------------------------

namespace {

struct Group {
    std::string axis;
    std::string cell;
};

std::vector<Group> groups_of(const TrialInfo& t) {
    const auto& a = t.attributes;
    switch (t.task) {
        case Task::Oddball:
            return {{"concept", a.at("concept").get<std::string>()}, {"mdl", std::to_string(a.at("mdl").get<int>())}};
        case Task::Numerosity:
            return {{"condition_numerosity", t.cell},
                    {"condition", a.at("condition").get<std::string>()},
                    {"numerosity", std::to_string(a.at("numerosity").get<int>())}};
        case Task::Rotation: {
            const bool same = a.at("pair_same").get<bool>();
            const bool m = a.at("first_mirrored").get<bool>();
            return {{"disparity", fmt::format("{:03d}", a.at("disparity_deg").get<int>())},
                    {"trial_type", fmt::format("{}/{}", same ? "same" : "mirror", m ? "m1" : "m0")},
                    {"theta", fmt::format("{:03d}", a.at("theta_deg").get<int>())}};
        }
    }
    return {};
}

struct HumanTrial {
    std::size_t n = 0;
    std::size_t correct = 0;
    std::vector<double> z;
};

struct ModelTrial {
    std::optional<bool> correct;  ///< after the invalid policy
    bool invalid = false;
};

struct TaskData {
    const Manifest* manifest = nullptr;
    std::map<std::string, HumanTrial> human;                             // trial id -> aggregate
    std::map<std::string, std::map<std::string, ModelTrial>> model;      // model -> trial id -> result
    std::map<std::string, std::map<std::string, std::vector<double>>> participant_z;  // participant -> cell -> z
};

struct Agg {
    std::size_t n_trials = 0;
    std::size_t hn = 0, hc = 0;
    std::vector<double> z;
    std::size_t mn = 0, mc = 0, minv = 0;
};

CorrelationRow correlate(std::string task, std::string analysis, std::string level, std::string model_id,
                         std::string filter, std::string x_name, std::string y_name, const std::vector<double>& x,
                         const std::vector<double>& y) {
    CorrelationRow row{std::move(task), std::move(analysis), std::move(level), std::move(model_id), std::move(filter),
                       std::move(x_name), std::move(y_name), x.size(), std::nullopt, std::nullopt, {}};
    try {
        const auto c = pearson(x, y, row.level);
        row.r = c.r;
        row.p = c.p;
    } catch (const ZeroVariance&) {
        row.note = "zero variance";
    } catch (const StatsError&) {
        row.note = "insufficient data";
    }
    return row;
}

TTestRow compare(std::string task, std::string analysis, std::string model_id, bool paired, const std::vector<double>& a,
                 const std::vector<double>& b) {
    TTestRow row;
    row.task = std::move(task);
    row.analysis = std::move(analysis);
    row.model_id = std::move(model_id);
    row.paired = paired;
    row.n_a = a.size();
    row.n_b = b.size();
    row.mean_a = mean_of(a);
    row.mean_b = mean_of(b);
    try {
        row.result = ttest(a, b, paired);
    } catch (const ZeroVariance&) {
        row.note = "zero variance";
    } catch (const StatsError&) {
        row.note = "insufficient data";
    }
    return row;
}

// Paired samples of per-participant mean z between two cell sets.
void paired_participant_means(const TaskData& d, const std::function<int(const std::string& cell)>& side,
                              std::vector<double>& a, std::vector<double>& b) {
    for (const auto& [participant, cells] : d.participant_z) {
        std::vector<double> za, zb;
        for (const auto& [cell, zs] : cells) {
            const int s = side(cell);
            if (s == 1) za.insert(za.end(), zs.begin(), zs.end());
            if (s == 2) zb.insert(zb.end(), zs.begin(), zs.end());
        }
        if (za.empty() || zb.empty()) continue;
        a.push_back(mean(za));
        b.push_back(mean(zb));
    }
}

}  // namespace

Summaries build_summaries(const std::vector<Manifest>& manifests, const std::vector<service::HumanResponse>& responses,
                          const EvalsByModel& evals, const AnalysisOptions& options) {
    Summaries out;
    std::map<Task, TaskData> data;
    std::map<std::string, std::pair<Task, const TrialInfo*>> index;
    for (const auto& m : manifests) {
        data[m.task].manifest = &m;
        for (const auto& t : m.trials) index[t.trial_id] = {m.task, &t};
    }

    const auto z = zscore_rt(responses, options);
    out.dropped_participants = z.dropped;
    out.n_responses = responses.size();
    for (std::size_t i = 0; i < responses.size(); ++i) {
        const auto& r = responses[i];
        const auto it = index.find(r.trial_id);
        if (it == index.end()) throw MissingJoin(fmt::format("response references unknown trial '{}'", r.trial_id));
        if (!z.records[i].valid) continue;
        ++out.n_valid_responses;
        const auto& [task, info] = it->second;
        auto& d = data[task];
        auto& h = d.human[r.trial_id];
        ++h.n;
        if (r.answer == info->answer) ++h.correct;
        if (z.records[i].z) {
            h.z.push_back(*z.records[i].z);
            d.participant_z[r.session_id][info->cell].push_back(*z.records[i].z);
        }
    }
    std::set<std::string> model_ids;
    for (const auto& [model_id, by_task] : evals) {
        for (const auto& [task, records] : by_task) {
            auto& d = data[task];
            for (const auto& rec : records) {
                if (!index.count(rec.trial_id)) {
                    throw MissingJoin(fmt::format("evaluation of '{}' references unknown trial '{}'", model_id, rec.trial_id));
                }
                ModelTrial mt;
                mt.invalid = !rec.correct.has_value();
                mt.correct = rec.correct;
                if (!mt.correct && options.invalid_as_wrong) mt.correct = false;
                d.model[model_id][rec.trial_id] = mt;
            }
            model_ids.insert(model_id);
        }
    }

    for (auto& [task, d] : data) {
        if (d.manifest == nullptr) continue;
        const std::string task_name(to_string(task));
        TaskSummary ts;
        ts.task = task;
        std::vector<std::string> models;
        for (const auto& [id, _] : d.model) models.push_back(id);
        const std::vector<std::string> model_slots = models.empty() ? std::vector<std::string>{""} : models;

        // per-cell aggregation, one block of rows per model
        std::map<std::pair<std::string, std::string>, std::map<std::string, Agg>> cells;  // (axis, cell) -> model -> agg
        for (const auto& t : d.manifest->trials) {
            const auto h = d.human.find(t.trial_id);
            for (const auto& g : groups_of(t)) {
                for (const auto& m : model_slots) {
                    auto& agg = cells[{g.axis, g.cell}][m];
                    ++agg.n_trials;
                    if (h != d.human.end()) {
                        agg.hn += h->second.n;
                        agg.hc += h->second.correct;
                        agg.z.insert(agg.z.end(), h->second.z.begin(), h->second.z.end());
                    }
                    if (m.empty()) continue;
                    const auto& mm = d.model.at(m);
                    const auto r = mm.find(t.trial_id);
                    if (r == mm.end()) continue;
                    if (r->second.invalid) ++agg.minv;
                    if (r->second.correct) {
                        ++agg.mn;
                        if (*r->second.correct) ++agg.mc;
                    }
                }
            }
        }
        for (const auto& [key, per_model] : cells) {
            for (const auto& [m, agg] : per_model) {
                CellSummary c;
                c.axis = key.first;
                c.cell = key.second;
                c.n_trials = agg.n_trials;
                c.human_n = agg.hn;
                c.human_correct = agg.hc;
                if (agg.hn > 0) {
                    c.human_accuracy = static_cast<double>(agg.hc) / static_cast<double>(agg.hn);
                    c.human_ci = wilson_ci(agg.hc, agg.hn, options.ci_level);
                }
                c.human_n_rt = agg.z.size();
                c.human_mean_zrt = mean_of(agg.z);
                c.model_id = m;
                c.model_n = agg.mn;
                c.model_correct = agg.mc;
                c.model_invalid = agg.minv;
                if (agg.mn > 0) {
                    c.model_accuracy = static_cast<double>(agg.mc) / static_cast<double>(agg.mn);
                    c.model_ci = wilson_ci(agg.mc, agg.mn, options.ci_level);
                }
                ts.cells.push_back(std::move(c));
            }
        }

        // per-trial rows
        for (const auto& t : d.manifest->trials) {
            const auto h = d.human.find(t.trial_id);
            for (const auto& m : model_slots) {
                TrialRow row;
                row.trial_id = t.trial_id;
                row.cell = t.cell;
                if (h != d.human.end()) {
                    row.human_n = h->second.n;
                    if (h->second.n > 0) {
                        row.human_accuracy = static_cast<double>(h->second.correct) / static_cast<double>(h->second.n);
                    }
                    row.human_mean_zrt = mean_of(h->second.z);
                }
                row.model_id = m;
                if (!m.empty()) {
                    const auto& mm = d.model.at(m);
                    const auto r = mm.find(t.trial_id);
                    if (r != mm.end()) row.model_correct = r->second.correct;
                }
                ts.trials.push_back(std::move(row));
            }
        }
        std::sort(ts.trials.begin(), ts.trials.end(), [](const TrialRow& a, const TrialRow& b) {
            return std::tie(a.trial_id, a.model_id) < std::tie(b.trial_id, b.model_id);
        });

        // helpers over the cell table
        auto cell_rows = [&](const std::string& axis, const std::string& m) {
            std::vector<const CellSummary*> rows;
            for (const auto& c : ts.cells) {
                if (c.axis == axis && c.model_id == m) rows.push_back(&c);
            }
            return rows;
        };
        auto human_slot = model_slots.front();

        if (task == Task::Oddball) {
            for (const auto& m : models) {
                std::vector<double> zx, ay, hx, hy;
                for (const auto* c : cell_rows("concept", m)) {
                    if (!c->model_accuracy) continue;
                    if (c->human_mean_zrt) {
                        zx.push_back(*c->human_mean_zrt);
                        ay.push_back(*c->model_accuracy);
                    }
                    if (c->human_accuracy) {
                        hx.push_back(*c->human_accuracy);
                        hy.push_back(*c->model_accuracy);
                    }
                }
                out.correlations.push_back(correlate(task_name, "zrt_vs_model_accuracy", "concept", m, "", "human_mean_zrt",
                                                     "model_accuracy", zx, ay));
                out.correlations.push_back(correlate(task_name, "human_vs_model_accuracy", "concept", m, "",
                                                     "human_accuracy", "model_accuracy", hx, hy));
                std::vector<double> mx, my;
                for (const auto* c : cell_rows("concept", m)) {
                    if (!c->model_accuracy) continue;
                    const auto& info = d.manifest->trials;
                    const auto t = std::find_if(info.begin(), info.end(), [&](const TrialInfo& ti) { return ti.cell == c->cell; });
                    mx.push_back(t->attributes.at("mdl").get<double>());
                    my.push_back(*c->model_accuracy);
                }
                out.correlations.push_back(
                    correlate(task_name, "mdl_vs_model_accuracy", "concept", m, "", "mdl", "model_accuracy", mx, my));

                // trial level: per-trial mean zRT against 0/1 correctness, plus decile bins
                std::vector<std::pair<double, const TrialRow*>> pts;
                for (const auto& row : ts.trials) {
                    if (row.model_id == m && row.human_mean_zrt && row.model_correct) pts.push_back({*row.human_mean_zrt, &row});
                }
                std::vector<double> tx, ty;
                for (const auto& [zv, row] : pts) {
                    tx.push_back(zv);
                    ty.push_back(*row->model_correct ? 1.0 : 0.0);
                }
                out.correlations.push_back(
                    correlate(task_name, "zrt_vs_model_correct", "trial", m, "", "human_mean_zrt", "model_correct", tx, ty));
                std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) {
                    return std::tie(a.first, a.second->trial_id) < std::tie(b.first, b.second->trial_id);
                });
                if (pts.size() >= 10) {
                    for (int bin = 0; bin < 10; ++bin) {
                        const auto lo = pts.size() * static_cast<std::size_t>(bin) / 10;
                        const auto hi = pts.size() * static_cast<std::size_t>(bin + 1) / 10;
                        BinRow b;
                        b.model_id = m;
                        b.bin = bin + 1;
                        b.n = hi - lo;
                        double sz = 0, sc = 0;
                        for (auto k = lo; k < hi; ++k) {
                            sz += pts[k].first;
                            sc += *pts[k].second->model_correct ? 1.0 : 0.0;
                        }
                        b.mean_zrt = sz / static_cast<double>(b.n);
                        b.model_accuracy = sc / static_cast<double>(b.n);
                        ts.bins.push_back(b);
                    }
                }
            }
            std::vector<double> mx, zy;
            for (const auto* c : cell_rows("mdl", human_slot)) {
                if (!c->human_mean_zrt) continue;
                mx.push_back(std::stod(c->cell));
                zy.push_back(*c->human_mean_zrt);
            }
            out.correlations.push_back(correlate(task_name, "mdl_vs_zrt", "mdl", "", "", "mdl", "human_mean_zrt", mx, zy));
        } else if (task == Task::Numerosity) {
            for (const auto& m : models) {
                std::vector<double> zx, ay;
                for (const auto* c : cell_rows("condition_numerosity", m)) {
                    if (c->model_accuracy && c->human_mean_zrt) {
                        zx.push_back(*c->human_mean_zrt);
                        ay.push_back(*c->model_accuracy);
                    }
                }
                out.correlations.push_back(correlate(task_name, "zrt_vs_model_accuracy", "condition_numerosity", m, "",
                                                     "human_mean_zrt", "model_accuracy", zx, ay));
            }
            std::set<std::string> conditions;
            for (const auto* c : cell_rows("condition", human_slot)) conditions.insert(c->cell);
            for (const auto& cond : conditions) {
                auto series = [&](const std::string& m, auto pick) {
                    std::vector<double> x, y;
                    for (const auto* c : cell_rows("condition_numerosity", m)) {
                        if (c->cell.rfind(cond + "/n", 0) != 0) continue;
                        const auto v = pick(*c);
                        if (!v) continue;
                        x.push_back(std::stod(c->cell.substr(cond.size() + 2)));
                        y.push_back(*v);
                    }
                    return std::pair{x, y};
                };
                auto [hx, hz] = series(human_slot, [](const CellSummary& c) { return c.human_mean_zrt; });
                out.correlations.push_back(
                    correlate(task_name, "numerosity_vs_zrt", "numerosity", "", cond, "numerosity", "human_mean_zrt", hx, hz));
                auto [ax, ay] = series(human_slot, [](const CellSummary& c) { return c.human_accuracy; });
                out.correlations.push_back(correlate(task_name, "numerosity_vs_human_accuracy", "numerosity", "", cond,
                                                     "numerosity", "human_accuracy", ax, ay));
                for (const auto& m : models) {
                    auto [mx, my] = series(m, [](const CellSummary& c) { return c.model_accuracy; });
                    out.correlations.push_back(correlate(task_name, "numerosity_vs_model_accuracy", "numerosity", m, cond,
                                                         "numerosity", "model_accuracy", mx, my));
                }
            }

            auto side_of = [](const char* one, const char* two) {
                return [one, two](const std::string& cell) {
                    if (cell.find(one) != std::string::npos) return 1;
                    if (cell.find(two) != std::string::npos) return 2;
                    return 0;
                };
            };
            std::vector<double> a, b;
            paired_participant_means(d, side_of("_overlapping/", "_distinct/"), a, b);
            out.ttests.push_back(compare(task_name, "zrt_overlapping_vs_distinct", "", true, a, b));
            a.clear();
            b.clear();
            paired_participant_means(d, side_of("uniform_", "colored_"), a, b);
            out.ttests.push_back(compare(task_name, "zrt_uniform_vs_colored", "", true, a, b));
            for (const auto& m : models) {
                std::map<std::string, double> acc;
                for (const auto* c : cell_rows("condition_numerosity", m)) {
                    if (c->model_accuracy) acc[c->cell] = *c->model_accuracy;
                }
                std::vector<double> ov, di;
                for (const char* color : {"uniform", "colored"}) {
                    for (int n = 1; n <= 8; ++n) {
                        const auto o = acc.find(fmt::format("{}_overlapping/n{}", color, n));
                        const auto s = acc.find(fmt::format("{}_distinct/n{}", color, n));
                        if (o == acc.end() || s == acc.end()) continue;
                        ov.push_back(o->second);
                        di.push_back(s->second);
                    }
                }
                out.ttests.push_back(compare(task_name, "model_accuracy_overlapping_vs_distinct", m, true, ov, di));
            }
        } else {
            std::vector<std::pair<std::string, std::optional<int>>> filters{{"", std::nullopt}};
            if (options.max_disparity) {
                filters.push_back({fmt::format("disparity<={}", *options.max_disparity), options.max_disparity});
            }
            for (const auto& [fname, limit] : filters) {
                auto series = [&](const std::string& m, auto pick) {
                    std::vector<double> x, y;
                    for (const auto* c : cell_rows("disparity", m)) {
                        const double disp = std::stod(c->cell);
                        if (limit && disp > *limit) continue;
                        const auto v = pick(*c);
                        if (!v) continue;
                        x.push_back(disp);
                        y.push_back(*v);
                    }
                    return std::pair{x, y};
                };
                auto [ex, ey] = series(human_slot, [](const CellSummary& c) {
                    return c.human_accuracy ? std::optional<double>(1.0 - *c.human_accuracy) : std::nullopt;
                });
                out.correlations.push_back(
                    correlate(task_name, "disparity_vs_human_error", "disparity", "", fname, "disparity_deg", "human_error", ex, ey));
                auto [zx, zy] = series(human_slot, [](const CellSummary& c) { return c.human_mean_zrt; });
                out.correlations.push_back(
                    correlate(task_name, "disparity_vs_zrt", "disparity", "", fname, "disparity_deg", "human_mean_zrt", zx, zy));
                for (const auto& m : models) {
                    auto [mx, my] = series(m, [](const CellSummary& c) {
                        return c.model_accuracy ? std::optional<double>(1.0 - *c.model_accuracy) : std::nullopt;
                    });
                    out.correlations.push_back(correlate(task_name, "disparity_vs_model_error", "disparity", m, fname,
                                                         "disparity_deg", "model_error", mx, my));
                    std::vector<double> hz, ma;
                    for (const auto* c : cell_rows("disparity", m)) {
                        if (limit && std::stod(c->cell) > *limit) continue;
                        if (c->human_mean_zrt && c->model_accuracy) {
                            hz.push_back(*c->human_mean_zrt);
                            ma.push_back(*c->model_accuracy);
                        }
                    }
                    out.correlations.push_back(correlate(task_name, "zrt_vs_model_accuracy", "disparity", m, fname,
                                                         "human_mean_zrt", "model_accuracy", hz, ma));
                }
            }
            std::vector<double> a, b;
            paired_participant_means(
                d,
                [](const std::string& cell) {
                    if (cell.find("/same/") != std::string::npos) return 1;
                    if (cell.find("/mirror/") != std::string::npos) return 2;
                    return 0;
                },
                a, b);
            out.ttests.push_back(compare(task_name, "zrt_same_vs_mirror", "", true, a, b));
        }
        out.tasks.push_back(std::move(ts));
    }
    return out;
}

void write_summaries(const Summaries& s, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    for (const auto& ts : s.tasks) {
        const std::string task(to_string(ts.task));
        CsvWriter cells(out_dir / (task + "_cells.csv"));
        cells.row({"axis", "cell", "n_trials", "human_n", "human_correct", "human_accuracy", "human_ci_low", "human_ci_high",
                   "human_n_rt", "human_mean_zrt", "model_id", "model_n", "model_correct", "model_invalid",
                   "model_accuracy", "model_ci_low", "model_ci_high"});
        for (const auto& c : ts.cells) {
            cells.row({c.axis, c.cell, std::to_string(c.n_trials), std::to_string(c.human_n), std::to_string(c.human_correct),
                       num(c.human_accuracy), c.human_accuracy ? num(c.human_ci.low) : "",
                       c.human_accuracy ? num(c.human_ci.high) : "", std::to_string(c.human_n_rt), num(c.human_mean_zrt),
                       c.model_id, c.model_id.empty() ? "" : std::to_string(c.model_n),
                       c.model_id.empty() ? "" : std::to_string(c.model_correct),
                       c.model_id.empty() ? "" : std::to_string(c.model_invalid), num(c.model_accuracy),
                       c.model_accuracy ? num(c.model_ci.low) : "", c.model_accuracy ? num(c.model_ci.high) : ""});
        }
        CsvWriter trials(out_dir / (task + "_trials.csv"));
        trials.row({"trial_id", "cell", "human_n", "human_accuracy", "human_mean_zrt", "model_id", "model_correct"});
        for (const auto& t : ts.trials) {
            trials.row({t.trial_id, t.cell, std::to_string(t.human_n), num(t.human_accuracy), num(t.human_mean_zrt),
                        t.model_id, t.model_correct ? (*t.model_correct ? "1" : "0") : ""});
        }
        if (ts.task == Task::Oddball) {
            CsvWriter bins(out_dir / "oddball_trial_bins.csv");
            bins.row({"model_id", "bin", "n", "mean_zrt", "model_accuracy"});
            for (const auto& b : ts.bins) {
                bins.row({b.model_id, std::to_string(b.bin), std::to_string(b.n), num(b.mean_zrt), num(b.model_accuracy)});
            }
        }
    }
    CsvWriter corr(out_dir / "correlations.csv");
    corr.row({"task", "analysis", "level", "model_id", "filter", "x", "y", "n", "r", "p", "note"});
    for (const auto& c : s.correlations) {
        corr.row({c.task, c.analysis, c.level, c.model_id, c.filter, c.x, c.y, std::to_string(c.n), num(c.r), num(c.p), c.note});
    }
    CsvWriter tt(out_dir / "ttests.csv");
    tt.row({"task", "analysis", "model_id", "paired", "n_a", "n_b", "mean_a", "mean_b", "t", "df", "p", "note"});
    for (const auto& t : s.ttests) {
        tt.row({t.task, t.analysis, t.model_id, t.paired ? "1" : "0", std::to_string(t.n_a), std::to_string(t.n_b),
                num(t.mean_a), num(t.mean_b), t.result ? num(t.result->t) : "", t.result ? num(t.result->df) : "",
                t.result ? num(t.result->p) : "", t.note});
    }
}

std::vector<service::HumanResponse> load_responses(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw std::runtime_error(fmt::format("no responses at '{}'", path.string()));
    std::vector<service::HumanResponse> out;
    for (const auto& e : service::EventLog::read(path)) {
        if (e.contains("type") && e.at("type") != "response_recorded") continue;
        out.push_back(service::response_from_json(e));
    }
    return out;
}

EvalsByModel load_evals(const std::filesystem::path& root, harness::Mode mode) {
    EvalsByModel out;
    const auto dir = root / "evals";
    if (!std::filesystem::is_directory(dir)) return out;
    std::vector<std::filesystem::path> models;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_directory()) models.push_back(entry.path());
    }
    std::sort(models.begin(), models.end());
    for (const auto& m : models) {
        const auto id = m.filename().string();
        for (Task t : kAllTasks) {
            const auto p = harness::eval_path(root, id, t, mode);
            if (std::filesystem::exists(p)) out[id][t] = harness::read_jsonl(p);
        }
    }
    return out;
}

}  // namespace serialprobe::analysis
