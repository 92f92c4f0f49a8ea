#include "stcnn/volume.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace stcnn {

namespace {

static_assert(sizeof(float) == 4, "f32 payload requires 4-byte float");

std::string format_double(double v) {
    std::array<char, 32> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), ptr);
}

std::filesystem::path header_path(const std::filesystem::path& payload) {
    std::filesystem::path p = payload;
    p += ".hdr";
    return p;
}

}  // namespace

void Volume4D::validate() const {
    if (t < 2) {
        throw FormatError("Volume4D: T must be >= 2, got " + std::to_string(t));
    }
    if (d <= 0 || h <= 0 || w <= 0) {
        throw FormatError("Volume4D: degenerate spatial dims " + std::to_string(d) + "x" +
                          std::to_string(h) + "x" + std::to_string(w));
    }
    if (static_cast<std::int64_t>(data.size()) != numel()) {
        throw FormatError("Volume4D: payload holds " + std::to_string(data.size()) +
                          " values, dims require " + std::to_string(numel()));
    }
    if (!mask.empty() && static_cast<std::int64_t>(mask.size()) != frame_size()) {
        throw FormatError("Volume4D: mask holds " + std::to_string(mask.size()) +
                          " voxels, dims require " + std::to_string(frame_size()));
    }
    for (const double v : data) {
        if (!std::isfinite(v)) {
            throw DataError("Volume4D: non-finite voxel value");
        }
    }
}

void write_volume4d(const Volume4D& vol, const std::filesystem::path& path) {
    vol.validate();
    {
        std::ofstream hdr(header_path(path));
        if (!hdr) {
            throw FormatError("cannot write header " + header_path(path).string());
        }
        hdr << "vol4 1\n";
        hdr << "dims " << vol.t << " " << vol.d << " " << vol.h << " " << vol.w << "\n";
        hdr << "dtype float32\n";
        hdr << "order t z y x\n";
        hdr << "endian little\n";
        hdr << "repetition_time " << format_double(vol.repetition_time) << "\n";
        hdr << "mask " << (vol.mask.empty() ? "none" : "inline") << "\n";
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw FormatError("cannot write payload " + path.string());
    }
    std::vector<float> payload(vol.data.size());
    for (std::size_t i = 0; i < vol.data.size(); ++i) {
        payload[i] = static_cast<float>(vol.data[i]);
    }
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size() * sizeof(float)));
    if (!vol.mask.empty()) {
        out.write(reinterpret_cast<const char*>(vol.mask.data()),
                  static_cast<std::streamsize>(vol.mask.size()));
    }
    if (!out) {
        throw FormatError("short write on " + path.string());
    }
}

Volume4D read_volume4d(const std::filesystem::path& path) {
    std::ifstream hdr(header_path(path));
    if (!hdr) {
        throw FormatError("missing header sidecar " + header_path(path).string());
    }
    Volume4D vol;
    bool has_dims = false;
    bool inline_mask = false;
    std::string line;
    while (std::getline(hdr, line)) {
        std::istringstream ls(line);
        std::string key;
        if (!(ls >> key) || key.empty() || key[0] == '#') {
            continue;
        }
        if (key == "vol4") {
            int version = 0;
            ls >> version;
            if (version != 1) {
                throw FormatError("unsupported vol4 header version in " +
                                  header_path(path).string());
            }
        } else if (key == "dims") {
            if (!(ls >> vol.t >> vol.d >> vol.h >> vol.w)) {
                throw FormatError("malformed dims line in " + header_path(path).string());
            }
            has_dims = true;
        } else if (key == "dtype") {
            std::string dtype;
            ls >> dtype;
            if (dtype != "float32") {
                throw FormatError("unsupported dtype '" + dtype + "' in " +
                                  header_path(path).string());
            }
        } else if (key == "repetition_time") {
            ls >> vol.repetition_time;
        } else if (key == "mask") {
            std::string m;
            ls >> m;
            inline_mask = (m == "inline");
        }
        // unknown keys are ignored for forward compatibility
    }
    if (!has_dims) {
        throw FormatError("header lacks dims: " + header_path(path).string());
    }
    if (vol.t < 2 || vol.d <= 0 || vol.h <= 0 || vol.w <= 0) {
        throw FormatError("header dims invalid (" + std::to_string(vol.t) + " " +
                          std::to_string(vol.d) + " " + std::to_string(vol.h) + " " +
                          std::to_string(vol.w) + ") in " + header_path(path).string());
    }

    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) {
        throw FormatError("missing payload " + path.string());
    }
    const std::int64_t actual = static_cast<std::int64_t>(in.tellg());
    const std::int64_t expected = vol.numel() * static_cast<std::int64_t>(sizeof(float)) +
                                  (inline_mask ? vol.frame_size() : 0);
    if (actual != expected) {
        throw FormatError("payload size mismatch in " + path.string() + ": expected " +
                          std::to_string(expected) + " bytes, got " + std::to_string(actual));
    }
    in.seekg(0);
    std::vector<float> payload(static_cast<std::size_t>(vol.numel()));
    in.read(reinterpret_cast<char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(float)));
    if (inline_mask) {
        vol.mask.resize(static_cast<std::size_t>(vol.frame_size()));
        in.read(reinterpret_cast<char*>(vol.mask.data()),
                static_cast<std::streamsize>(vol.mask.size()));
    }
    if (!in) {
        throw FormatError("short read on " + path.string());
    }
    vol.data.resize(payload.size());
    for (std::size_t i = 0; i < payload.size(); ++i) {
        vol.data[i] = static_cast<double>(payload[i]);
    }
    vol.validate();
    return vol;
}

void write_network_map(const NetworkMap& map, const std::filesystem::path& path) {
    if (map.d <= 0 || map.h <= 0 || map.w <= 0 ||
        static_cast<std::int64_t>(map.values.size()) != map.numel()) {
        throw FormatError("NetworkMap: inconsistent dims/payload");
    }
    {
        std::ofstream hdr(header_path(path));
        if (!hdr) {
            throw FormatError("cannot write header " + header_path(path).string());
        }
        hdr << "vol4 1\n";
        hdr << "dims 1 " << map.d << " " << map.h << " " << map.w << "\n";
        hdr << "dtype float32\n";
        hdr << "order t z y x\n";
        hdr << "endian little\n";
        if (!map.label.empty()) {
            hdr << "label " << map.label << "\n";
        }
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw FormatError("cannot write payload " + path.string());
    }
    std::vector<float> payload(map.values.size());
    for (std::size_t i = 0; i < map.values.size(); ++i) {
        payload[i] = static_cast<float>(map.values[i]);
    }
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size() * sizeof(float)));
    if (!out) {
        throw FormatError("short write on " + path.string());
    }
}

NetworkMap read_network_map(const std::filesystem::path& path) {
    std::ifstream hdr(header_path(path));
    if (!hdr) {
        throw FormatError("missing header sidecar " + header_path(path).string());
    }
    NetworkMap map;
    std::int64_t t = 0;
    bool has_dims = false;
    std::string line;
    while (std::getline(hdr, line)) {
        std::istringstream ls(line);
        std::string key;
        if (!(ls >> key) || key.empty() || key[0] == '#') {
            continue;
        }
        if (key == "dims") {
            if (!(ls >> t >> map.d >> map.h >> map.w)) {
                throw FormatError("malformed dims line in " + header_path(path).string());
            }
            has_dims = true;
        } else if (key == "label") {
            std::getline(ls >> std::ws, map.label);
        }
    }
    if (!has_dims || t != 1 || map.d <= 0 || map.h <= 0 || map.w <= 0) {
        throw FormatError("not a single-frame map file: " + path.string());
    }
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) {
        throw FormatError("missing payload " + path.string());
    }
    const std::int64_t actual = static_cast<std::int64_t>(in.tellg());
    const std::int64_t expected = map.numel() * static_cast<std::int64_t>(sizeof(float));
    if (actual != expected) {
        throw FormatError("payload size mismatch in " + path.string() + ": expected " +
                          std::to_string(expected) + " bytes, got " + std::to_string(actual));
    }
    in.seekg(0);
    std::vector<float> payload(static_cast<std::size_t>(map.numel()));
    in.read(reinterpret_cast<char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(float)));
    if (!in) {
        throw FormatError("short read on " + path.string());
    }
    map.values.resize(payload.size());
    for (std::size_t i = 0; i < payload.size(); ++i) {
        map.values[i] = static_cast<double>(payload[i]);
    }
    return map;
}

void write_series_csv(const std::filesystem::path& path, const std::vector<std::string>& names,
                      const std::vector<TimeSeries>& columns) {
    if (names.size() != columns.size() || columns.empty()) {
        throw UsageError("write_series_csv: one name per column required");
    }
    const std::size_t n = columns.front().size();
    for (const auto& c : columns) {
        if (c.size() != n) {
            throw DimensionError("write_series_csv: ragged columns");
        }
    }
    std::ofstream out(path);
    if (!out) {
        throw FormatError("cannot write " + path.string());
    }
    for (std::size_t j = 0; j < names.size(); ++j) {
        out << (j ? "," : "") << names[j];
    }
    out << "\n";
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < columns.size(); ++j) {
            out << (j ? "," : "") << format_double(columns[j][i]);
        }
        out << "\n";
    }
}

std::vector<TimeSeries> read_series_csv(const std::filesystem::path& path,
                                        std::vector<std::string>* names) {
    std::ifstream in(path);
    if (!in) {
        throw FormatError("cannot read " + path.string());
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw FormatError("empty series csv " + path.string());
    }
    std::vector<std::string> header;
    {
        std::istringstream ls(line);
        std::string f;
        while (std::getline(ls, f, ',')) {
            header.push_back(f);
        }
    }
    std::vector<TimeSeries> cols(header.size());
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        std::istringstream ls(line);
        std::string f;
        std::size_t j = 0;
        while (std::getline(ls, f, ',')) {
            if (j >= cols.size()) {
                throw FormatError("row wider than header in " + path.string());
            }
            cols[j++].push_back(std::stod(f));
        }
        if (j != cols.size()) {
            throw FormatError("row narrower than header in " + path.string());
        }
    }
    if (names != nullptr) {
        *names = header;
    }
    return cols;
}

NormalizeResult normalize(const Volume4D& vol) {
    vol.validate();
    NormalizeResult res;
    res.volume = vol;
    const std::int64_t voxels = vol.frame_size();
    res.constant_voxels.assign(static_cast<std::size_t>(voxels), 0);
    const double tn = static_cast<double>(vol.t);
    for (std::int64_t v = 0; v < voxels; ++v) {
        if (!vol.in_mask(v)) {
            for (std::int64_t ti = 0; ti < vol.t; ++ti) {
                res.volume.data[static_cast<std::size_t>(ti * voxels + v)] = 0.0;
            }
            continue;
        }
        double mean = 0.0;
        for (std::int64_t ti = 0; ti < vol.t; ++ti) {
            mean += vol.data[static_cast<std::size_t>(ti * voxels + v)];
        }
        mean /= tn;
        double var = 0.0;
        for (std::int64_t ti = 0; ti < vol.t; ++ti) {
            const double c = vol.data[static_cast<std::size_t>(ti * voxels + v)] - mean;
            var += c * c;
        }
        var /= tn;  // N divisor
        const double sigma = std::sqrt(var);
        if (sigma < 1e-12) {
            for (std::int64_t ti = 0; ti < vol.t; ++ti) {
                res.volume.data[static_cast<std::size_t>(ti * voxels + v)] = 0.0;
            }
            res.constant_voxels[static_cast<std::size_t>(v)] = 1;
            ++res.constant_count;
            continue;
        }
        for (std::int64_t ti = 0; ti < vol.t; ++ti) {
            auto& cell = res.volume.data[static_cast<std::size_t>(ti * voxels + v)];
            cell = (cell - mean) / sigma;
        }
    }
    return res;
}

}  // namespace stcnn
