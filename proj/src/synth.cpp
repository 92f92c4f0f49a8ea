#include "stcnn/synth.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

namespace stcnn {

namespace {

// Deterministic standard normal, independent of the standard library's
// distribution internals.
class BoxMuller {
  public:
    explicit BoxMuller(std::uint64_t seed) : rng_(seed) {}

    double next() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

  private:
    double uniform() {
        return static_cast<double>(rng_()) * 0x1.0p-64;
    }
    std::mt19937_64 rng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace

void SyntheticSpec::validate() const {
    if (t < 2 || d <= 0 || h <= 0 || w <= 0) {
        throw ConfigError("SyntheticSpec: degenerate dims " + std::to_string(t) + "x" +
                          std::to_string(d) + "x" + std::to_string(h) + "x" + std::to_string(w));
    }
    if (networks.empty()) {
        throw ConfigError("SyntheticSpec: at least one planted network required");
    }
    if (noise_sigma < 0.0) {
        throw ConfigError("SyntheticSpec: noise_sigma must be >= 0");
    }
    if (smoothing_tau <= 0.0) {
        throw ConfigError("SyntheticSpec: smoothing_tau must be > 0");
    }
    const double ext[3] = {static_cast<double>(d), static_cast<double>(h),
                           static_cast<double>(w)};
    for (const auto& net : networks) {
        if (net.blobs.empty() || net.boxcars.empty()) {
            throw ConfigError("SyntheticSpec: network '" + net.label +
                              "' needs at least one blob and one boxcar");
        }
        for (const auto& b : net.blobs) {
            if (b.radius <= 0.0) {
                throw ConfigError("SyntheticSpec: non-positive blob radius");
            }
            const double c[3] = {b.cz, b.cy, b.cx};
            for (int a = 0; a < 3; ++a) {
                if (c[a] - b.radius < -0.5 || c[a] + b.radius > ext[a] - 0.5) {
                    throw ConfigError("SyntheticSpec: blob support leaves the volume on axis " +
                                      std::to_string(a));
                }
            }
        }
        for (const auto& bc : net.boxcars) {
            if (bc.onset < 0 || bc.duration < 1 || bc.onset + bc.duration > t) {
                throw ConfigError("SyntheticSpec: boxcar [" + std::to_string(bc.onset) + "," +
                                  std::to_string(bc.onset + bc.duration) + ") outside 0.." +
                                  std::to_string(t));
            }
        }
    }
}

NetworkMap render_blobs(std::int64_t d, std::int64_t h, std::int64_t w,
                        const std::vector<Blob>& blobs) {
    NetworkMap map;
    map.d = d;
    map.h = h;
    map.w = w;
    map.values.assign(static_cast<std::size_t>(map.numel()), 0.0);
    for (const auto& b : blobs) {
        for (std::int64_t z = 0; z < d; ++z) {
            for (std::int64_t y = 0; y < h; ++y) {
                for (std::int64_t x = 0; x < w; ++x) {
                    const double dz = static_cast<double>(z) - b.cz;
                    const double dy = static_cast<double>(y) - b.cy;
                    const double dx = static_cast<double>(x) - b.cx;
                    const double r2 = (dz * dz + dy * dy + dx * dx) / (b.radius * b.radius);
                    if (r2 < 1.0) {
                        // overlapping blobs take the stronger value
                        map.at(z, y, x) = std::max(map.at(z, y, x), 1.0 - r2);
                    }
                }
            }
        }
    }
    return map;
}

TimeSeries render_course(std::int64_t t, const std::vector<Boxcar>& boxcars, double tau) {
    TimeSeries box(static_cast<std::size_t>(t), 0.0);
    for (const auto& bc : boxcars) {
        for (std::int64_t ti = bc.onset; ti < bc.onset + bc.duration; ++ti) {
            box[static_cast<std::size_t>(ti)] = 1.0;
        }
    }
    const double decay = std::exp(-1.0 / tau);
    TimeSeries course(static_cast<std::size_t>(t), 0.0);
    double state = 0.0;
    for (std::int64_t ti = 0; ti < t; ++ti) {
        state = decay * state + (1.0 - decay) * box[static_cast<std::size_t>(ti)];
        course[static_cast<std::size_t>(ti)] = state;
    }
    return course;
}

SynthesisResult synthesize(const SyntheticSpec& spec) {
    spec.validate();
    SynthesisResult res;
    res.volume.t = spec.t;
    res.volume.d = spec.d;
    res.volume.h = spec.h;
    res.volume.w = spec.w;
    res.volume.repetition_time = spec.repetition_time;
    res.volume.data.assign(static_cast<std::size_t>(res.volume.numel()), 0.0);

    for (const auto& net : spec.networks) {
        NetworkMap map = render_blobs(spec.d, spec.h, spec.w, net.blobs);
        map.label = net.label;
        TimeSeries course = render_course(spec.t, net.boxcars, spec.smoothing_tau);

        const std::int64_t voxels = res.volume.frame_size();
        for (std::int64_t ti = 0; ti < spec.t; ++ti) {
            const double c = course[static_cast<std::size_t>(ti)];
            if (c == 0.0) {
                continue;
            }
            double* frame = res.volume.data.data() + ti * voxels;
            for (std::int64_t v = 0; v < voxels; ++v) {
                frame[v] += c * map.values[static_cast<std::size_t>(v)];
            }
        }
        res.maps.push_back(std::move(map));
        res.courses.push_back(std::move(course));
    }

    if (spec.noise_sigma > 0.0) {
        BoxMuller noise(spec.seed);
        for (auto& cell : res.volume.data) {
            cell += spec.noise_sigma * noise.next();
        }
    }
    return res;
}

SyntheticSpec parse_synthetic_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw FormatError("cannot read spec file " + path.string());
    }
    SyntheticSpec spec;
    spec.networks.clear();
    std::string line;
    std::int64_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ls(line);
        std::string key;
        if (!(ls >> key) || key.empty() || key[0] == '#') {
            continue;
        }
        auto fail = [&](const std::string& what) {
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + what);
        };
        if (key == "dims") {
            if (!(ls >> spec.t >> spec.d >> spec.h >> spec.w)) {
                fail("dims expects T D H W");
            }
        } else if (key == "noise_sigma") {
            if (!(ls >> spec.noise_sigma)) {
                fail("noise_sigma expects a number");
            }
        } else if (key == "seed") {
            if (!(ls >> spec.seed)) {
                fail("seed expects an integer");
            }
        } else if (key == "repetition_time") {
            if (!(ls >> spec.repetition_time)) {
                fail("repetition_time expects a number");
            }
        } else if (key == "smoothing_tau") {
            if (!(ls >> spec.smoothing_tau)) {
                fail("smoothing_tau expects a number");
            }
        } else if (key == "network") {
            PlantedNetwork net;
            ls >> net.label;
            if (net.label.empty()) {
                net.label = "network" + std::to_string(spec.networks.size());
            }
            spec.networks.push_back(std::move(net));
        } else if (key == "blob") {
            if (spec.networks.empty()) {
                fail("blob before any network line");
            }
            Blob b;
            if (!(ls >> b.cz >> b.cy >> b.cx >> b.radius)) {
                fail("blob expects cz cy cx radius");
            }
            spec.networks.back().blobs.push_back(b);
        } else if (key == "boxcar") {
            if (spec.networks.empty()) {
                fail("boxcar before any network line");
            }
            Boxcar bc;
            if (!(ls >> bc.onset >> bc.duration)) {
                fail("boxcar expects onset duration");
            }
            spec.networks.back().boxcars.push_back(bc);
        } else {
            fail("unknown key '" + key + "'");
        }
    }
    spec.validate();
    return spec;
}

void write_synthetic_spec(const SyntheticSpec& spec, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw FormatError("cannot write spec file " + path.string());
    }
    out << "dims " << spec.t << " " << spec.d << " " << spec.h << " " << spec.w << "\n";
    out << "noise_sigma " << spec.noise_sigma << "\n";
    out << "seed " << spec.seed << "\n";
    out << "repetition_time " << spec.repetition_time << "\n";
    out << "smoothing_tau " << spec.smoothing_tau << "\n";
    for (const auto& net : spec.networks) {
        out << "network " << net.label << "\n";
        for (const auto& b : net.blobs) {
            out << "blob " << b.cz << " " << b.cy << " " << b.cx << " " << b.radius << "\n";
        }
        for (const auto& bc : net.boxcars) {
            out << "boxcar " << bc.onset << " " << bc.duration << "\n";
        }
    }
}

}  // namespace stcnn
