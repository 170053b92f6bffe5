#include "sgda/signal_io.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "sgda/kv_config.hpp"

namespace sgda {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kManifestMagic = "sgda-manifest";

struct ParsedTable {
    std::vector<std::string> columns;  // excluding time_s
    std::vector<std::vector<double>> values;  // one vector per column
};

ParsedTable parse_current_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open recording: " + path.string());

    ParsedTable table;
    std::string line;
    int line_no = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (!header_seen) {
            if (t.empty() || t.front() == '#') continue;
            auto names = split(t, ',');
            if (names.size() < 2 || names.front() != "time_s")
                throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                                         ": expected header 'time_s,current_a'");
            table.columns.assign(names.begin() + 1, names.end());
            table.values.resize(table.columns.size());
            header_seen = true;
            continue;
        }
        if (t.empty()) continue;
        const auto fields = split(t, ',');
        const std::string where = path.string() + ":" + std::to_string(line_no);
        if (fields.size() != table.columns.size() + 1)
            throw std::runtime_error(where + ": expected " + std::to_string(table.columns.size() + 1) +
                                     " fields, got " + std::to_string(fields.size()));
        for (std::size_t i = 0; i < fields.size(); ++i) {
            double v = 0.0;
            try {
                v = parse_double(fields[i], where);
            } catch (const std::invalid_argument&) {
                throw std::runtime_error(where + ": malformed value '" + fields[i] + "'");
            }
            if (!std::isfinite(v)) throw std::runtime_error(where + ": non-finite value '" + fields[i] + "'");
            if (i > 0) table.values[i - 1].push_back(v);
        }
    }
    if (!header_seen) throw std::runtime_error(path.string() + ": missing header");
    if (table.values.front().empty()) throw std::runtime_error(path.string() + ": no samples");
    return table;
}

std::string default_source_id(const fs::path& path, const std::string& source_id) {
    return source_id.empty() ? path.stem().string() : source_id;
}

}  // namespace

void CurrentRecording::validate(double band_limit_hz) const {
    if (samples.empty()) throw std::invalid_argument(source_id + ": no samples");
    for (double v : samples)
        if (!std::isfinite(v)) throw std::invalid_argument(source_id + ": non-finite sample");
    if (!(sample_rate_hz >= 2.0 * band_limit_hz))
        throw std::invalid_argument(source_id + ": sample rate " + format_double(sample_rate_hz) +
                                    " Hz is below twice the band limit " + format_double(band_limit_hz) + " Hz");
}

CurrentRecording load_recording(const fs::path& path, double sample_rate_hz, const std::string& source_id,
                                Label label) {
    if (!(sample_rate_hz > 0.0)) throw std::invalid_argument("sample rate must be positive");
    auto table = parse_current_csv(path);
    if (table.columns.size() != 1)
        throw std::runtime_error(path.string() + ": expected a single current column, found " +
                                 std::to_string(table.columns.size()));
    return CurrentRecording{sample_rate_hz, std::move(table.values.front()), default_source_id(path, source_id),
                            label};
}

std::vector<CurrentRecording> load_phase_recordings(const fs::path& path, double sample_rate_hz,
                                                    const std::string& source_id, Label label) {
    if (!(sample_rate_hz > 0.0)) throw std::invalid_argument("sample rate must be positive");
    auto table = parse_current_csv(path);
    const std::string base = default_source_id(path, source_id);
    std::vector<CurrentRecording> out;
    for (std::size_t c = 0; c < table.columns.size(); ++c)
        out.push_back({sample_rate_hz, std::move(table.values[c]), base + "/" + table.columns[c], label});
    return out;
}

void save_recording(const fs::path& path, const CurrentRecording& recording) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write recording: " + path.string());
    out << "# source_id: " << recording.source_id << '\n';
    out << "# label: " << label_to_string(recording.label) << '\n';
    out << "time_s,current_a\n";
    for (std::size_t i = 0; i < recording.samples.size(); ++i)
        out << format_double(static_cast<double>(i) / recording.sample_rate_hz) << ','
            << format_double(recording.samples[i]) << '\n';
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<SampleWindow> split_windows(const CurrentRecording& recording, std::size_t window_len, std::size_t hop) {
    if (window_len == 0) throw std::invalid_argument("window length must be positive");
    if (hop == 0) throw std::invalid_argument("hop must be positive");
    const auto& x = recording.samples;
    if (window_len > x.size()) throw std::invalid_argument("recording too short");
    const std::size_t count = (x.size() - window_len) / hop + 1;
    std::vector<SampleWindow> windows;
    windows.reserve(count);
    for (std::size_t w = 0; w < count; ++w) {
        const auto first = x.begin() + static_cast<std::ptrdiff_t>(w * hop);
        windows.emplace_back(first, first + static_cast<std::ptrdiff_t>(window_len));
    }
    return windows;
}

DatasetManifest load_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest: " + path.string());
    const fs::path base = fs::absolute(path).parent_path();

    DatasetManifest manifest;
    std::string line;
    int line_no = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        const std::string where = path.string() + ":" + std::to_string(line_no);
        if (!header_seen) {
            std::istringstream header(t);
            std::string magic;
            int version = 0;
            if (!(header >> magic >> version) || magic != kManifestMagic)
                throw std::runtime_error(where + ": expected '" + std::string(kManifestMagic) + " <version>'");
            if (version != DatasetManifest::kFormatVersion)
                throw std::runtime_error(where + ": unsupported manifest version " + std::to_string(version));
            manifest.format_version = version;
            header_seen = true;
            continue;
        }
        const auto fields = split(t, ',');
        if (fields.size() != 4) throw std::runtime_error(where + ": expected path,label,motor_config,sample_rate_hz");
        ManifestEntry e;
        e.recording = base / fields[0];
        e.label = parse_label(fields[1]);
        e.motor_config = base / fields[2];
        e.sample_rate_hz = parse_double(fields[3], where);
        for (const auto& p : {e.recording, e.motor_config})
            if (!fs::exists(p)) throw std::runtime_error(where + ": referenced file does not exist: " + p.string());
        manifest.entries.push_back(std::move(e));
    }
    if (!header_seen) throw std::runtime_error(path.string() + ": empty manifest");
    return manifest;
}

void save_manifest(const fs::path& path, const DatasetManifest& manifest) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write manifest: " + path.string());
    const fs::path base = fs::absolute(path).parent_path();
    // Relative entries are already relative to the manifest directory.
    auto as_written = [&](const fs::path& p) {
        return (p.is_absolute() ? p.lexically_relative(base) : p).generic_string();
    };
    out << kManifestMagic << ' ' << manifest.format_version << '\n';
    for (const auto& e : manifest.entries)
        out << as_written(e.recording) << ',' << label_to_string(e.label) << ',' << as_written(e.motor_config) << ','
            << format_double(e.sample_rate_hz) << '\n';
}

ManifestContents load_manifest_contents(const fs::path& path) {
    const auto manifest = load_manifest(path);
    const fs::path base = fs::absolute(path).parent_path();
    ManifestContents contents;
    for (const auto& e : manifest.entries) {
        const std::string motor_key = e.motor_config.lexically_relative(base).generic_string();
        if (!contents.motors.count(motor_key)) contents.motors.emplace(motor_key, load_motor_parameters(e.motor_config));
        const std::string id = e.recording.lexically_relative(base).generic_string();
        contents.recordings.push_back(load_recording(e.recording, e.sample_rate_hz, id, e.label));
        contents.recording_motor.push_back(motor_key);
    }
    return contents;
}

}  // namespace sgda
