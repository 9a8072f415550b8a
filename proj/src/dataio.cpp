#include "ape/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "ape/binio.hpp"
#include "ape/error.hpp"
#include "ape/fsutil.hpp"

namespace ape::dataio {

namespace {

constexpr std::string_view kMagic = "APEF";
constexpr std::string_view kManifestHeader = "APE-TASK v1";
constexpr double kUnitNormSlack = 1e-4;

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

DenseMatrix ensure_unit_rows(const DenseMatrix& m, const std::string& role, Diagnostics* diag) {
    bool off = false;
    for (std::size_t r = 0; r < m.rows() && !off; ++r) {
        off = std::abs(numkit::norm(m.row(r)) - 1.0) > kUnitNormSlack;
    }
    if (!off) return m;
    if (diag) diag->warn(role + ": rows are not unit norm; renormalizing");
    return numkit::l2_normalize_rows(m, diag);
}

std::vector<std::size_t> labels_from_matrix(const DenseMatrix& m, const std::string& role) {
    require(m.cols() == 1, ErrorKind::ShapeMismatch,
            role + " must be an N x 1 matrix of class ids, got " + shape_string(m));
    std::vector<std::size_t> out(m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const double x = m(r, 0);
        require(x >= 0.0 && x == std::floor(x), ErrorKind::ShapeMismatch,
                role + " row " + std::to_string(r) + " is not a class id");
        out[r] = static_cast<std::size_t>(x);
    }
    return out;
}

DenseMatrix labels_to_matrix(const std::vector<std::size_t>& labels) {
    DenseMatrix m(labels.size(), 1);
    for (std::size_t r = 0; r < labels.size(); ++r) m(r, 0) = static_cast<double>(labels[r]);
    return m;
}

DenseMatrix noisy_copies(const DenseMatrix& prototypes, std::size_t per_class, double sigma,
                         std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    DenseMatrix out(prototypes.rows() * per_class, prototypes.cols());
    for (std::size_t c = 0; c < prototypes.rows(); ++c) {
        for (std::size_t j = 0; j < per_class; ++j) {
            auto row = out.row(c * per_class + j);
            for (std::size_t k = 0; k < row.size(); ++k) {
                row[k] = prototypes(c, k) + sigma * normal(rng);
            }
        }
    }
    return out.empty() ? out : numkit::l2_normalize_rows(out);
}

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t salt) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(salt)};
    return std::mt19937_64(seq);
}

}  // namespace

std::string encode_matrix(const DenseMatrix& m) {
    binio::Writer w;
    w.bytes(kMagic);
    w.u32(kApefVersion);
    w.u64(m.rows());
    w.u64(m.cols());
    for (double x : m.data()) {
        const auto f = static_cast<float>(x);
        require(std::isfinite(f), ErrorKind::NonFinite,
                "value " + std::to_string(x) + " is not representable as float32");
        w.f32(f);
    }
    return w.str();
}

DenseMatrix decode_matrix(const std::string& bytes) {
    require(bytes.size() >= kMagic.size() && bytes.compare(0, kMagic.size(), kMagic) == 0,
            ErrorKind::BadMagic, "missing APEF magic");
    binio::Reader r(bytes);
    r.bytes(kMagic.size());
    const std::uint32_t version = r.u32();
    require(version == kApefVersion, ErrorKind::UnsupportedVersion,
            "APEF version " + std::to_string(version));
    const std::uint64_t rows = r.u64();
    const std::uint64_t cols = r.u64();
    constexpr std::uint64_t kMaxEntries =
        std::numeric_limits<std::size_t>::max() / sizeof(double);
    require(cols == 0 || rows <= kMaxEntries / cols, ErrorKind::ShapeOverflow,
            "APEF shape " + std::to_string(rows) + "x" + std::to_string(cols) + " overflows");
    const std::uint64_t count = rows * cols;
    require(count * 4 <= r.remaining(), ErrorKind::Truncated,
            "APEF payload has " + std::to_string(r.remaining()) + " bytes, expected " +
                std::to_string(count * 4));
    require(count * 4 == r.remaining(), ErrorKind::ShapeMismatch,
            "APEF payload has " + std::to_string(r.remaining() - count * 4) + " trailing bytes");
    std::vector<double> data(count);
    for (double& x : data) x = static_cast<double>(r.f32());
    DenseMatrix m(rows, cols, std::move(data));
    numkit::check_finite(m, "APEF payload");
    return m;
}

DenseMatrix read_matrix(const std::filesystem::path& path) {
    try {
        return decode_matrix(fsutil::read_file(path));
    } catch (const Error& e) {
        throw Error(e.kind(), path.string() + ": " + e.what());
    }
}

void write_matrix(const std::filesystem::path& path, const DenseMatrix& m) {
    fsutil::atomic_write(path, encode_matrix(m));
}

DenseMatrix quantize_f32(const DenseMatrix& m) {
    DenseMatrix out = m;
    for (double& x : out.data()) x = static_cast<double>(static_cast<float>(x));
    return out;
}

FewShotTask load_task(const std::filesystem::path& manifest_path, Diagnostics* diag) {
    std::istringstream in(fsutil::read_file(manifest_path));
    std::string line;
    require(static_cast<bool>(std::getline(in, line)) && trim(line) == kManifestHeader,
            ErrorKind::BadMagic, manifest_path.string() + " does not start with APE-TASK v1");

    std::map<std::string, std::string> fields;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        const auto eq = t.find('=');
        require(eq != std::string::npos, ErrorKind::Parse,
                manifest_path.string() + ":" + std::to_string(line_no) + ": expected key = value");
        fields[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
    }

    auto get = [&](const std::string& key) -> const std::string& {
        const auto it = fields.find(key);
        require(it != fields.end(), ErrorKind::Parse,
                manifest_path.string() + ": missing key '" + key + "'");
        return it->second;
    };
    auto count = [&](const std::string& key) -> std::size_t {
        try {
            return std::stoull(get(key));
        } catch (const std::logic_error&) {
            throw Error(ErrorKind::Parse, manifest_path.string() + ": " + key + " is not a count");
        }
    };
    const auto base = manifest_path.parent_path();
    auto resolve = [&](const std::string& rel) {
        const std::filesystem::path p(rel);
        return p.is_absolute() ? p : base / p;
    };
    auto matrix = [&](const std::string& key) {
        try {
            return read_matrix(resolve(get(key)));
        } catch (const Error& e) {
            throw Error(e.kind(), key + ": " + e.what());
        }
    };

    FewShotTask task;
    task.c = count("C");
    task.k = count("K");
    task.d = count("D");
    if (const auto it = fields.find("class_names"); it != fields.end() && !it->second.empty()) {
        std::istringstream names(it->second);
        std::string name;
        while (std::getline(names, name, ',')) task.class_names.push_back(trim(name));
    }
    task.text_features = matrix("text_features");
    task.support_features = matrix("support_features");
    task.support_labels = matrix("support_labels");
    task.test_features = matrix("test_features");
    if (fields.count("test_labels")) {
        task.test_labels = labels_from_matrix(matrix("test_labels"), "test_labels");
    }
    if (fields.count("val_features")) task.val_features = matrix("val_features");
    if (fields.count("val_labels")) {
        task.val_labels = labels_from_matrix(matrix("val_labels"), "val_labels");
    }
    task.validate();

    task.text_features = ensure_unit_rows(task.text_features, "text_features", diag);
    task.support_features = ensure_unit_rows(task.support_features, "support_features", diag);
    if (!task.test_features.empty()) {
        task.test_features = ensure_unit_rows(task.test_features, "test_features", diag);
    }
    if (task.val_features && !task.val_features->empty()) {
        task.val_features = ensure_unit_rows(*task.val_features, "val_features", diag);
    }
    return task;
}

void save_task(const std::filesystem::path& manifest_path, const FewShotTask& task) {
    task.validate();
    const auto dir = manifest_path.parent_path();
    if (!dir.empty()) std::filesystem::create_directories(dir);
    std::ostringstream os;
    os << kManifestHeader << "\n";
    os << "C = " << task.c << "\nK = " << task.k << "\nD = " << task.d << "\n";
    os << "class_names = ";
    for (std::size_t i = 0; i < task.class_names.size(); ++i) {
        os << (i ? "," : "") << task.class_names[i];
    }
    os << "\n";
    auto emit = [&](const std::string& role, const DenseMatrix& m) {
        const std::string file = role + ".apef";
        write_matrix(dir / file, m);
        os << role << " = " << file << "\n";
    };
    emit("text_features", task.text_features);
    emit("support_features", task.support_features);
    emit("support_labels", task.support_labels);
    emit("test_features", task.test_features);
    if (task.test_labels) emit("test_labels", labels_to_matrix(*task.test_labels));
    if (task.val_features) emit("val_features", *task.val_features);
    if (task.val_labels) emit("val_labels", labels_to_matrix(*task.val_labels));
    fsutil::atomic_write(manifest_path, os.str());
}

std::vector<std::size_t> synthetic_zeroed_channels(std::size_t d, std::uint64_t seed) {
    auto rng = stream(seed, 1);
    std::vector<std::size_t> channels(d);
    std::iota(channels.begin(), channels.end(), std::size_t{0});
    std::shuffle(channels.begin(), channels.end(), rng);
    channels.resize(d / 4);
    std::sort(channels.begin(), channels.end());
    return channels;
}

FewShotTask gen_synthetic(const SyntheticSpec& spec) {
    require(spec.c >= 2, ErrorKind::InvalidArgument, "gen_synthetic: c must be >= 2");
    require(spec.d >= 2, ErrorKind::InvalidArgument, "gen_synthetic: d must be >= 2");
    require(spec.k >= 1, ErrorKind::InvalidArgument, "gen_synthetic: k must be >= 1");
    require(spec.noise_sigma >= 0.0 && std::isfinite(spec.noise_sigma),
            ErrorKind::InvalidArgument, "gen_synthetic: noise_sigma must be >= 0");
    require(spec.modality_gap >= 0.0 && std::isfinite(spec.modality_gap),
            ErrorKind::InvalidArgument, "gen_synthetic: modality_gap must be >= 0");

    auto proto_rng = stream(spec.seed, 0);
    std::normal_distribution<double> normal(0.0, 1.0);
    DenseMatrix prototypes(spec.c, spec.d);
    for (double& x : prototypes.data()) x = normal(proto_rng);
    for (std::size_t k : synthetic_zeroed_channels(spec.d, spec.seed)) {
        for (std::size_t c = 0; c < spec.c; ++c) prototypes(c, k) = 0.0;
    }
    prototypes = numkit::l2_normalize_rows(prototypes);

    DenseMatrix centers = prototypes;
    if (spec.modality_gap > 0.0) {
        auto gap_rng = stream(spec.seed, 4);
        const auto zeroed = synthetic_zeroed_channels(spec.d, spec.seed);
        for (std::size_t c = 0; c < spec.c; ++c) {
            for (std::size_t k = 0; k < spec.d; ++k) {
                const double offset = spec.modality_gap * normal(gap_rng);
                if (!std::binary_search(zeroed.begin(), zeroed.end(), k)) centers(c, k) += offset;
            }
        }
        centers = numkit::l2_normalize_rows(centers);
    }

    FewShotTask task;
    task.c = spec.c;
    task.k = spec.k;
    task.d = spec.d;
    task.text_features = prototypes;
    auto support_rng = stream(spec.seed, 2);
    task.support_features = noisy_copies(centers, spec.k, spec.noise_sigma, support_rng);
    std::vector<std::size_t> support_classes(spec.c * spec.k);
    for (std::size_t i = 0; i < support_classes.size(); ++i) support_classes[i] = i / spec.k;
    task.support_labels = one_hot(support_classes, spec.c);

    auto test_rng = stream(spec.seed, 3);
    task.test_features = noisy_copies(centers, spec.n_test_per_class, spec.noise_sigma, test_rng);
    if (task.test_features.empty()) task.test_features = DenseMatrix(0, spec.d);
    std::vector<std::size_t> test_classes(spec.c * spec.n_test_per_class);
    for (std::size_t i = 0; i < test_classes.size(); ++i) {
        test_classes[i] = i / spec.n_test_per_class;
    }
    task.test_labels = test_classes;
    for (std::size_t c = 0; c < spec.c; ++c) {
        task.class_names.push_back("class_" + std::to_string(c));
    }
    return task;
}

}  // namespace ape::dataio
