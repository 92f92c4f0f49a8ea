#include "stcnn/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace stcnn {

namespace {

// splitmix64-style mixing so subject streams are independent of each other
// and of the noise stream.
std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t x = a + 0x9E3779B97F4A7C15ull * (b + 1);
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ull;
    x ^= x >> 27;
    x *= 0x94D049BB133111EBull;
    x ^= x >> 31;
    return x;
}

std::vector<Blob> canonical_target_blobs(const CohortConfig& c) {
    const double m = static_cast<double>(std::min({c.d, c.h, c.w}));
    return {
        Blob{0.40 * static_cast<double>(c.d), 0.35 * static_cast<double>(c.h),
             0.35 * static_cast<double>(c.w), 0.22 * m},
        Blob{0.62 * static_cast<double>(c.d), 0.66 * static_cast<double>(c.h),
             0.64 * static_cast<double>(c.w), 0.18 * m},
    };
}

std::vector<Boxcar> block_design(std::int64_t t, std::int64_t blocks, double phase,
                                 std::int64_t jitter, std::mt19937_64* rng) {
    const double stride = static_cast<double>(t) / static_cast<double>(blocks);
    const std::int64_t duration = std::max<std::int64_t>(2, static_cast<std::int64_t>(stride) / 2);
    std::vector<Boxcar> out;
    for (std::int64_t k = 0; k < blocks; ++k) {
        std::int64_t onset = static_cast<std::int64_t>(std::llround(
            static_cast<double>(k) * stride + phase));
        if (rng != nullptr && jitter > 0) {
            std::uniform_int_distribution<std::int64_t> d(-jitter, jitter);
            onset += d(*rng);
        }
        onset = std::clamp<std::int64_t>(onset, 0, t - duration);
        out.push_back(Boxcar{onset, duration});
    }
    return out;
}

std::string subject_id(std::int64_t i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "sub%03lld", static_cast<long long>(i));
    return buf;
}

}  // namespace

SyntheticSpec subject_spec(const CohortConfig& cohort, std::int64_t subject) {
    SyntheticSpec spec;
    spec.t = cohort.t;
    spec.d = cohort.d;
    spec.h = cohort.h;
    spec.w = cohort.w;
    spec.noise_sigma = cohort.noise_sigma;
    spec.seed = mix(cohort.seed, static_cast<std::uint64_t>(subject));
    std::mt19937_64 rng(mix(cohort.seed ^ 0x5DEECE66Dull, static_cast<std::uint64_t>(subject)));

    // target: canonical blobs with a small per-subject positional jitter
    PlantedNetwork target;
    target.label = "target";
    std::uniform_real_distribution<double> jit(-cohort.target_jitter, cohort.target_jitter);
    for (Blob b : canonical_target_blobs(cohort)) {
        b.cz += jit(rng);
        b.cy += jit(rng);
        b.cx += jit(rng);
        target.blobs.push_back(b);
    }
    target.boxcars = block_design(cohort.t, 4, static_cast<double>(cohort.t) / 16.0,
                                  cohort.onset_jitter, &rng);
    spec.networks.push_back(std::move(target));

    // distractors: random placement, block designs at other frequencies
    const double m = static_cast<double>(std::min({cohort.d, cohort.h, cohort.w}));
    for (std::int64_t j = 0; j < cohort.distractors; ++j) {
        PlantedNetwork net;
        net.label = "distractor" + std::to_string(j + 1);
        std::uniform_real_distribution<double> radius(0.14 * m, 0.20 * m);
        const double r = radius(rng);
        auto center = [&](std::int64_t ext) {
            std::uniform_real_distribution<double> c(r, static_cast<double>(ext) - 1.0 - r);
            return c(rng);
        };
        net.blobs.push_back(Blob{center(cohort.d), center(cohort.h), center(cohort.w), r});
        const std::int64_t blocks = 3 + 2 * (j % 2);  // 3 or 5 vs the target's 4
        std::uniform_real_distribution<double> phase(0.0, static_cast<double>(cohort.t) /
                                                              static_cast<double>(blocks));
        net.boxcars = block_design(cohort.t, blocks, phase(rng), cohort.onset_jitter, &rng);
        spec.networks.push_back(std::move(net));
    }
    return spec;
}

NetworkMap cohort_template(const CohortConfig& cohort) {
    NetworkMap map = render_blobs(cohort.d, cohort.h, cohort.w, canonical_target_blobs(cohort));
    map.label = "target_template";
    return map;
}

Subject build_synthetic_subject(const CohortConfig& cohort, std::int64_t subject) {
    const SyntheticSpec spec = subject_spec(cohort, subject);
    SynthesisResult syn = synthesize(spec);
    Subject s;
    s.id = subject_id(subject);
    s.data = normalize(syn.volume).volume;
    s.planted_map = syn.maps.front();
    s.planted_series = syn.courses.front();
    // held-out subjects carry the planted truth in the label slots too
    s.label_map = s.planted_map;
    s.label_series = s.planted_series;
    s.label_match_jaccard = 1.0;
    return s;
}

std::vector<Subject> build_synthetic_dataset(const DatasetBuildConfig& cfg, std::int64_t first,
                                             std::int64_t count) {
    const NetworkMap tmpl = cohort_template(cfg.cohort);
    std::vector<Subject> out;
    out.reserve(static_cast<std::size_t>(count));
    for (std::int64_t i = first; i < first + count; ++i) {
        Subject s = build_synthetic_subject(cfg.cohort, i);
        DictLearnConfig dict = cfg.dict;
        dict.seed = mix(cfg.dict.seed ^ 0xD1C7u, static_cast<std::uint64_t>(i));
        const DictionaryModel model = dict_learn(s.data, dict);
        const TemplateMatch match = select_target(model, tmpl, cfg.rule);
        s.label_match_jaccard = match.jaccard;
        s.label_ok = match.jaccard >= cfg.label_floor;
        s.label_map = model.coefficients[static_cast<std::size_t>(match.best_index)];
        s.label_series = model.atoms[static_cast<std::size_t>(match.best_index)];
        if (cfg.normalize_label_map) {
            double peak = 0.0;
            for (const double v : s.label_map.values) {
                peak = std::max(peak, std::abs(v));
            }
            if (peak > 0.0) {
                for (auto& v : s.label_map.values) {
                    v /= peak;
                }
            }
        }
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace stcnn
