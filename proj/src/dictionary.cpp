#include "stcnn/dictionary.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <string_view>
#include <thread>

#include "stcnn/errors.hpp"

namespace stcnn {

namespace {

double soft_threshold(double u, double s) {
    if (u > s) {
        return u - s;
    }
    if (u < -s) {
        return u + s;
    }
    return 0.0;
}

// Dense factorization workspace over the in-mask voxels.
// X is voxel-major (V x T), A is voxel-major (V x K), atoms are atom-major
// (K x T).
struct Workspace {
    std::int64_t t = 0, v = 0, k = 0;
    std::vector<double> x;                  // V*T
    std::vector<std::int64_t> voxel_index;  // v -> full-volume voxel
    std::vector<std::vector<double>> atoms; // K x T
    std::vector<double> a;                  // V*K
};

Workspace gather(const Volume4D& data, std::int64_t k, bool learning) {
    data.validate();
    Workspace ws;
    ws.t = data.t;
    ws.k = k;
    const std::int64_t voxels = data.frame_size();
    for (std::int64_t vi = 0; vi < voxels; ++vi) {
        if (data.in_mask(vi)) {
            ws.voxel_index.push_back(vi);
        }
    }
    ws.v = static_cast<std::int64_t>(ws.voxel_index.size());
    if (ws.v == 0) {
        throw ConfigError("dictionary: empty voxel mask");
    }
    if (k < 1) {
        throw ConfigError("dictionary: K must be >= 1");
    }
    // learning updates atoms from the data; that needs more voxels than atoms
    if (learning && k >= ws.v) {
        throw ConfigError("dictionary: K must satisfy K < in-mask voxels (" + std::to_string(k) +
                          " vs " + std::to_string(ws.v) + ")");
    }
    ws.x.resize(static_cast<std::size_t>(ws.v * ws.t));
    for (std::int64_t vi = 0; vi < ws.v; ++vi) {
        const std::int64_t full = ws.voxel_index[static_cast<std::size_t>(vi)];
        for (std::int64_t ti = 0; ti < ws.t; ++ti) {
            ws.x[static_cast<std::size_t>(vi * ws.t + ti)] =
                data.data[static_cast<std::size_t>(ti * voxels + full)];
        }
    }
    ws.a.assign(static_cast<std::size_t>(ws.v * ws.k), 0.0);
    return ws;
}

double unit_normalize(std::vector<double>& v) {
    double norm = 0.0;
    for (const double e : v) {
        norm += e * e;
    }
    norm = std::sqrt(norm);
    if (norm > 0.0) {
        for (auto& e : v) {
            e /= norm;
        }
    }
    return norm;
}

void init_atoms(Workspace& ws, std::int64_t first_free, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<std::int64_t> candidates(static_cast<std::size_t>(ws.v));
    std::iota(candidates.begin(), candidates.end(), 0);
    std::shuffle(candidates.begin(), candidates.end(), rng);
    std::size_t next = 0;
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    for (std::int64_t ki = first_free; ki < ws.k; ++ki) {
        auto& atom = ws.atoms[static_cast<std::size_t>(ki)];
        atom.assign(static_cast<std::size_t>(ws.t), 0.0);
        bool seeded = false;
        while (next < candidates.size()) {
            const std::int64_t vi = candidates[next++];
            std::copy_n(ws.x.begin() + vi * ws.t, ws.t, atom.begin());
            if (unit_normalize(atom) > 1e-9) {
                seeded = true;
                break;
            }
        }
        if (!seeded) {  // all remaining candidates constant: random unit atom
            for (auto& e : atom) {
                e = unif(rng);
            }
            unit_normalize(atom);
        }
    }
}

// G = D^T D and the ISTA step 1/(2*lambda_max(G)).
struct Gram {
    std::vector<double> g;  // K*K
    double step = 0.0;
};

Gram build_gram(const Workspace& ws) {
    Gram gram;
    const std::int64_t k = ws.k;
    gram.g.assign(static_cast<std::size_t>(k * k), 0.0);
    for (std::int64_t i = 0; i < k; ++i) {
        for (std::int64_t j = i; j < k; ++j) {
            double acc = 0.0;
            for (std::int64_t ti = 0; ti < ws.t; ++ti) {
                acc += ws.atoms[static_cast<std::size_t>(i)][static_cast<std::size_t>(ti)] *
                       ws.atoms[static_cast<std::size_t>(j)][static_cast<std::size_t>(ti)];
            }
            gram.g[static_cast<std::size_t>(i * k + j)] = acc;
            gram.g[static_cast<std::size_t>(j * k + i)] = acc;
        }
    }
    // power iteration for the spectral norm; G is PSD
    std::vector<double> vec(static_cast<std::size_t>(k), 1.0 / std::sqrt(static_cast<double>(k)));
    std::vector<double> tmp(static_cast<std::size_t>(k));
    double lmax = 1.0;
    for (int it = 0; it < 200; ++it) {
        for (std::int64_t i = 0; i < k; ++i) {
            double acc = 0.0;
            for (std::int64_t j = 0; j < k; ++j) {
                acc += gram.g[static_cast<std::size_t>(i * k + j)] *
                       vec[static_cast<std::size_t>(j)];
            }
            tmp[static_cast<std::size_t>(i)] = acc;
        }
        double norm = 0.0;
        for (const double e : tmp) {
            norm += e * e;
        }
        norm = std::sqrt(norm);
        if (norm < 1e-15) {
            lmax = 1.0;
            break;
        }
        const double prev = lmax;
        lmax = norm;
        for (std::int64_t i = 0; i < k; ++i) {
            vec[static_cast<std::size_t>(i)] = tmp[static_cast<std::size_t>(i)] / norm;
        }
        if (std::abs(lmax - prev) <= 1e-12 * lmax) {
            break;
        }
    }
    // unit-norm atoms give lmax >= 1; guard anyway
    gram.step = 1.0 / (2.0 * std::max(lmax, 1e-12) * (1.0 + 1e-12));
    return gram;
}

struct CodeOutcome {
    double max_kkt = 0.0;
    std::int64_t unconverged = 0;
};

// ISTA over one voxel range. Warm-started from ws.a; writes disjoint rows, so
// parallel calls over disjoint ranges are deterministic for any thread count.
CodeOutcome code_range(Workspace& ws, const Gram& gram, double lambda, std::int64_t v0,
                       std::int64_t v1, std::int64_t max_iters, double kkt_tol) {
    const std::int64_t k = ws.k;
    std::vector<double> xv(static_cast<std::size_t>(ws.t));
    std::vector<double> b(static_cast<std::size_t>(k));
    std::vector<double> r(static_cast<std::size_t>(k));
    CodeOutcome out;
    for (std::int64_t vi = v0; vi < v1; ++vi) {
        std::copy_n(ws.x.begin() + vi * ws.t, ws.t, xv.begin());
        for (std::int64_t j = 0; j < k; ++j) {
            double acc = 0.0;
            const auto& atom = ws.atoms[static_cast<std::size_t>(j)];
            for (std::int64_t ti = 0; ti < ws.t; ++ti) {
                acc += atom[static_cast<std::size_t>(ti)] * xv[static_cast<std::size_t>(ti)];
            }
            b[static_cast<std::size_t>(j)] = acc;
        }
        double* a = ws.a.data() + vi * k;
        double kkt = 0.0;
        bool ok = false;
        for (std::int64_t it = 0; it < max_iters; ++it) {
            // r = 2*(G*a - b), the gradient of the quadratic term
            for (std::int64_t i = 0; i < k; ++i) {
                double acc = 0.0;
                const double* grow = gram.g.data() + i * k;
                for (std::int64_t j = 0; j < k; ++j) {
                    acc += grow[j] * a[j];
                }
                r[static_cast<std::size_t>(i)] = 2.0 * (acc - b[static_cast<std::size_t>(i)]);
            }
            kkt = 0.0;
            for (std::int64_t i = 0; i < k; ++i) {
                const double ri = r[static_cast<std::size_t>(i)];
                double viol;
                if (a[i] > 0.0) {
                    viol = std::abs(ri + lambda);
                } else if (a[i] < 0.0) {
                    viol = std::abs(ri - lambda);
                } else {
                    viol = std::max(0.0, std::abs(ri) - lambda);
                }
                kkt = std::max(kkt, viol);
            }
            if (kkt <= kkt_tol) {
                ok = true;
                break;
            }
            for (std::int64_t i = 0; i < k; ++i) {
                a[i] = soft_threshold(a[i] - gram.step * r[static_cast<std::size_t>(i)],
                                      gram.step * lambda);
            }
        }
        out.max_kkt = std::max(out.max_kkt, kkt);
        if (!ok) {
            ++out.unconverged;
        }
    }
    return out;
}

SparseCodeStats code_all(Workspace& ws, const Gram& gram, double lambda, int threads,
                         std::int64_t max_iters, double kkt_tol) {
    SparseCodeStats stats;
    const int workers = std::max(1, threads);
    if (workers == 1 || ws.v < 256) {
        const auto out = code_range(ws, gram, lambda, 0, ws.v, max_iters, kkt_tol);
        stats.max_kkt = out.max_kkt;
        stats.voxels_unconverged = out.unconverged;
    } else {
        std::vector<CodeOutcome> outs(static_cast<std::size_t>(workers));
        std::vector<std::thread> pool;
        const std::int64_t chunk = (ws.v + workers - 1) / workers;
        for (int wi = 0; wi < workers; ++wi) {
            const std::int64_t v0 = wi * chunk;
            const std::int64_t v1 = std::min<std::int64_t>(ws.v, v0 + chunk);
            if (v0 >= v1) {
                break;
            }
            pool.emplace_back([&, wi, v0, v1] {
                outs[static_cast<std::size_t>(wi)] =
                    code_range(ws, gram, lambda, v0, v1, max_iters, kkt_tol);
            });
        }
        for (auto& th : pool) {
            th.join();
        }
        for (const auto& out : outs) {
            stats.max_kkt = std::max(stats.max_kkt, out.max_kkt);
            stats.voxels_unconverged += out.unconverged;
        }
    }
    stats.converged = stats.voxels_unconverged == 0;
    return stats;
}

double objective(const Workspace& ws, double lambda) {
    const std::int64_t k = ws.k;
    double quad = 0.0, l1 = 0.0;
    std::vector<double> recon(static_cast<std::size_t>(ws.t));
    for (std::int64_t vi = 0; vi < ws.v; ++vi) {
        std::fill(recon.begin(), recon.end(), 0.0);
        const double* a = ws.a.data() + vi * k;
        for (std::int64_t j = 0; j < k; ++j) {
            const double aj = a[j];
            if (aj == 0.0) {
                continue;
            }
            l1 += std::abs(aj);
            const auto& atom = ws.atoms[static_cast<std::size_t>(j)];
            for (std::int64_t ti = 0; ti < ws.t; ++ti) {
                recon[static_cast<std::size_t>(ti)] += aj * atom[static_cast<std::size_t>(ti)];
            }
        }
        const double* xv = ws.x.data() + vi * ws.t;
        for (std::int64_t ti = 0; ti < ws.t; ++ti) {
            const double e = xv[ti] - recon[static_cast<std::size_t>(ti)];
            quad += e * e;
        }
    }
    return quad + lambda * l1;
}

// Exact minimization of the quadratic term over the unit sphere for atom ki,
// holding A and the other atoms fixed: d = E_k a_k / ||E_k a_k||, computed
// via B = X^T A-style accumulations. Atoms below first_free are pinned.
void update_atoms(Workspace& ws, std::int64_t first_free) {
    const std::int64_t k = ws.k;
    // B[t][j] = sum_v X[v][t] * A[v][j]; C[i][j] = sum_v A[v][i]*A[v][j]
    std::vector<double> bmat(static_cast<std::size_t>(ws.t * k), 0.0);
    std::vector<double> cmat(static_cast<std::size_t>(k * k), 0.0);
    for (std::int64_t vi = 0; vi < ws.v; ++vi) {
        const double* xv = ws.x.data() + vi * ws.t;
        const double* a = ws.a.data() + vi * k;
        for (std::int64_t j = 0; j < k; ++j) {
            const double aj = a[j];
            if (aj == 0.0) {
                continue;
            }
            for (std::int64_t ti = 0; ti < ws.t; ++ti) {
                bmat[static_cast<std::size_t>(ti * k + j)] += xv[ti] * aj;
            }
            for (std::int64_t i = 0; i < k; ++i) {
                cmat[static_cast<std::size_t>(i * k + j)] += a[i] * aj;
            }
        }
    }
    std::vector<double> u(static_cast<std::size_t>(ws.t));
    for (std::int64_t ki = first_free; ki < k; ++ki) {
        const double ckk = cmat[static_cast<std::size_t>(ki * k + ki)];
        for (std::int64_t ti = 0; ti < ws.t; ++ti) {
            double acc = bmat[static_cast<std::size_t>(ti * k + ki)];
            for (std::int64_t j = 0; j < k; ++j) {
                acc -= ws.atoms[static_cast<std::size_t>(j)][static_cast<std::size_t>(ti)] *
                       cmat[static_cast<std::size_t>(j * k + ki)];
            }
            u[static_cast<std::size_t>(ti)] =
                acc + ws.atoms[static_cast<std::size_t>(ki)][static_cast<std::size_t>(ti)] * ckk;
        }
        double norm = 0.0;
        for (const double e : u) {
            norm += e * e;
        }
        norm = std::sqrt(norm);
        if (norm > 1e-12) {
            auto& atom = ws.atoms[static_cast<std::size_t>(ki)];
            for (std::int64_t ti = 0; ti < ws.t; ++ti) {
                atom[static_cast<std::size_t>(ti)] = u[static_cast<std::size_t>(ti)] / norm;
            }
        }
        // unused atom (norm ~ 0): keep the previous unit vector
    }
}

// Flip atom/row pairs so the strongest coefficient of each free atom is
// positive. Leaves the factorization and objective unchanged; gives subjects
// a consistent label sign downstream.
void canonicalize_signs(Workspace& ws, std::int64_t first_free) {
    const std::int64_t k = ws.k;
    for (std::int64_t ki = first_free; ki < k; ++ki) {
        double best = 0.0;
        for (std::int64_t vi = 0; vi < ws.v; ++vi) {
            const double c = ws.a[static_cast<std::size_t>(vi * k + ki)];
            if (std::abs(c) > std::abs(best)) {
                best = c;
            }
        }
        if (best < 0.0) {
            for (auto& e : ws.atoms[static_cast<std::size_t>(ki)]) {
                e = -e;
            }
            for (std::int64_t vi = 0; vi < ws.v; ++vi) {
                ws.a[static_cast<std::size_t>(vi * k + ki)] =
                    -ws.a[static_cast<std::size_t>(vi * k + ki)];
            }
        }
    }
}

DictionaryModel finish_model(const Volume4D& data, Workspace& ws, double lambda,
                             std::vector<double> trace, SparseCodeStats stats) {
    DictionaryModel model;
    model.lambda = lambda;
    model.k = ws.k;
    model.objective_trace = std::move(trace);
    model.final_code_stats = stats;
    model.atoms.reserve(static_cast<std::size_t>(ws.k));
    for (auto& atom : ws.atoms) {
        model.atoms.push_back(TimeSeries(atom.begin(), atom.end()));
    }
    const std::int64_t voxels = data.frame_size();
    for (std::int64_t ki = 0; ki < ws.k; ++ki) {
        NetworkMap map;
        map.d = data.d;
        map.h = data.h;
        map.w = data.w;
        map.label = "atom" + std::to_string(ki);
        map.values.assign(static_cast<std::size_t>(voxels), 0.0);
        for (std::int64_t vi = 0; vi < ws.v; ++vi) {
            map.values[static_cast<std::size_t>(ws.voxel_index[static_cast<std::size_t>(vi)])] =
                ws.a[static_cast<std::size_t>(vi * ws.k + ki)];
        }
        model.coefficients.push_back(std::move(map));
    }
    return model;
}

DictionaryModel learn_impl(const Volume4D& data, const std::vector<TimeSeries>& fixed_atoms,
                           const DictLearnConfig& cfg) {
    const std::int64_t fixed = static_cast<std::int64_t>(fixed_atoms.size());
    if (cfg.k < std::max<std::int64_t>(fixed, 1)) {
        throw ConfigError("dictionary: K must be >= number of fixed atoms and >= 1");
    }
    Workspace ws = gather(data, cfg.k, true);
    ws.atoms.assign(static_cast<std::size_t>(cfg.k), {});
    for (std::int64_t fi = 0; fi < fixed; ++fi) {
        const auto& src = fixed_atoms[static_cast<std::size_t>(fi)];
        if (static_cast<std::int64_t>(src.size()) != ws.t) {
            throw DimensionError("dictionary: fixed atom length " + std::to_string(src.size()) +
                                 " does not match T=" + std::to_string(ws.t));
        }
        auto& atom = ws.atoms[static_cast<std::size_t>(fi)];
        atom.assign(src.begin(), src.end());
        // The coding space is per-voxel z-scored, hence zero-mean; a DC
        // component in a pinned atom would only leak variance into the
        // learned atoms. Center, then normalize.
        double mean = 0.0;
        for (const double v : atom) {
            mean += v;
        }
        mean /= static_cast<double>(atom.size());
        for (auto& v : atom) {
            v -= mean;
        }
        if (unit_normalize(atom) <= 1e-12) {
            throw DataError("dictionary: fixed atom is constant");
        }
    }
    init_atoms(ws, fixed, cfg.seed);

    std::vector<double> trace;
    SparseCodeStats stats;
    double prev = std::numeric_limits<double>::infinity();
    for (std::int64_t round = 0; round < cfg.outer_iters; ++round) {
        const Gram gram = build_gram(ws);
        stats = code_all(ws, gram, cfg.lambda, cfg.threads, cfg.max_code_iters, cfg.kkt_tol);
        update_atoms(ws, fixed);
        const double obj = objective(ws, cfg.lambda);
        trace.push_back(obj);
        if (obj > prev + 1e-9 * std::max(1.0, std::abs(prev))) {
            std::ostringstream msg;
            msg << "dictionary objective increased at outer iteration " << round << ": " << prev
                << " -> " << obj << "; trace:";
            for (const double o : trace) {
                msg << " " << o;
            }
            throw ConvergenceError(msg.str());
        }
        prev = obj;
    }
    canonicalize_signs(ws, fixed);
    return finish_model(data, ws, cfg.lambda, std::move(trace), stats);
}

}  // namespace

DictionaryModel dict_learn(const Volume4D& data, const DictLearnConfig& cfg) {
    return learn_impl(data, {}, cfg);
}

DictionaryModel supervised_dict_learn(const Volume4D& data,
                                      const std::vector<TimeSeries>& fixed_atoms,
                                      const DictLearnConfig& cfg) {
    if (fixed_atoms.empty()) {
        throw ConfigError("supervised_dict_learn: at least one fixed atom required");
    }
    return learn_impl(data, fixed_atoms, cfg);
}

std::vector<NetworkMap> sparse_code(const Volume4D& data, const std::vector<TimeSeries>& atoms,
                                    double lambda, SparseCodeStats* stats, int threads,
                                    std::int64_t max_iters, double kkt_tol) {
    if (atoms.empty()) {
        throw ConfigError("sparse_code: empty atom list");
    }
    Workspace ws = gather(data, static_cast<std::int64_t>(atoms.size()), false);
    ws.atoms.assign(atoms.size(), {});
    for (std::size_t ki = 0; ki < atoms.size(); ++ki) {
        if (static_cast<std::int64_t>(atoms[ki].size()) != ws.t) {
            throw DimensionError("sparse_code: atom length " + std::to_string(atoms[ki].size()) +
                                 " does not match T=" + std::to_string(ws.t));
        }
        double norm = 0.0;
        for (const double e : atoms[ki]) {
            norm += e * e;
        }
        if (std::abs(norm - 1.0) > 1e-6) {
            throw DataError("sparse_code: atom " + std::to_string(ki) + " is not unit-norm");
        }
        ws.atoms[ki].assign(atoms[ki].begin(), atoms[ki].end());
    }
    const Gram gram = build_gram(ws);
    const SparseCodeStats s = code_all(ws, gram, lambda, threads, max_iters, kkt_tol);
    if (stats != nullptr) {
        *stats = s;
    }
    DictionaryModel tmp = finish_model(data, ws, lambda, {}, s);
    return std::move(tmp.coefficients);
}

void write_atoms_csv(const std::vector<TimeSeries>& atoms, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw FormatError("cannot write " + path.string());
    }
    std::array<char, 32> buf{};
    for (const auto& atom : atoms) {
        for (std::size_t i = 0; i < atom.size(); ++i) {
            auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), atom[i]);
            out << (i ? "," : "") << std::string_view(buf.data(), ptr);
        }
        out << "\n";
    }
}

std::vector<TimeSeries> read_atoms_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw FormatError("cannot read " + path.string());
    }
    std::vector<TimeSeries> atoms;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        TimeSeries atom;
        std::istringstream ls(line);
        std::string field;
        while (std::getline(ls, field, ',')) {
            atom.push_back(std::stod(field));
        }
        atoms.push_back(std::move(atom));
    }
    return atoms;
}

TemplateMatch select_target(const DictionaryModel& model, const NetworkMap& tmpl,
                            const BinarizeRule& rule) {
    if (model.coefficients.empty()) {
        throw ConfigError("select_target: model has no coefficient maps");
    }
    const auto& first = model.coefficients.front();
    if (tmpl.d != first.d || tmpl.h != first.h || tmpl.w != first.w) {
        throw DimensionError("select_target: template dims do not match coefficient maps");
    }
    const auto tmpl_bin = binarize(tmpl.values, rule);
    TemplateMatch match;
    match.all_scores.reserve(model.coefficients.size());
    for (const auto& coef : model.coefficients) {
        const auto bin = binarize(coef.values, rule);
        match.all_scores.push_back(jaccard_binary(bin, tmpl_bin).score);
    }
    match.best_index = 0;
    for (std::size_t i = 1; i < match.all_scores.size(); ++i) {
        if (match.all_scores[i] > match.all_scores[static_cast<std::size_t>(match.best_index)]) {
            match.best_index = static_cast<std::int64_t>(i);
        }
    }
    match.jaccard = match.all_scores[static_cast<std::size_t>(match.best_index)];
    match.no_match = match.jaccard == 0.0;
    return match;
}

}  // namespace stcnn
