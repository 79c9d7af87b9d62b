#include "mgcn/dataset.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>
#include <string_view>
#include <unordered_map>

#include "mgcn/error.hpp"

namespace mgcn {

namespace {

static_assert(std::endian::native == std::endian::little,
              "FMAT I/O assumes a little-endian host");

constexpr std::array<char, 4> kMagic{'F', 'M', 'A', 'T'};

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

double parse_double(std::string_view token, std::size_t line_no) {
    token = trim(token);
    if (!token.empty() && token.front() == '+') token.remove_prefix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
    if (ec != std::errc{} || ptr != token.data() + token.size() || token.empty()) {
        throw ParseError("line " + std::to_string(line_no) + ": cannot parse '" +
                         std::string(token) + "' as a real number");
    }
    return v;
}

std::ifstream open_in(const std::filesystem::path& path, std::ios::openmode mode = std::ios::in) {
    std::ifstream in(path, mode);
    if (!in) throw ParseError("cannot open " + path.string());
    return in;
}

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
    std::ofstream out(path, mode);
    if (!out) throw ConfigError("cannot write " + path.string());
    return out;
}

RowMatrix read_csv_matrix(const std::filesystem::path& path) {
    auto in = open_in(path);
    std::vector<double> values;
    std::size_t width = 0;
    std::size_t rows = 0;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto body = trim(line);
        if (body.empty()) continue;
        auto fields = split(body, ',');
        if (rows == 0) {
            width = fields.size();
        } else if (fields.size() != width) {
            throw ParseError("line " + std::to_string(line_no) + ": expected " +
                             std::to_string(width) + " values, found " +
                             std::to_string(fields.size()));
        }
        for (auto f : fields) values.push_back(parse_double(f, line_no));
        ++rows;
    }
    RowMatrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(width));
    std::copy(values.begin(), values.end(), m.data());
    return m;
}

}  // namespace

FeatureMatrix::FeatureMatrix(RowMatrix values) : values_(std::move(values)) {
    if (values_.rows() < 2 || values_.cols() < 1) {
        throw ValidationError("feature matrix needs n >= 2 and d >= 1, got " +
                              std::to_string(values_.rows()) + "x" +
                              std::to_string(values_.cols()));
    }
    for (Eigen::Index i = 0; i < values_.rows(); ++i) {
        for (Eigen::Index j = 0; j < values_.cols(); ++j) {
            if (!std::isfinite(values_(i, j))) {
                throw ValidationError("non-finite feature value at row " + std::to_string(i) +
                                      ", column " + std::to_string(j));
            }
        }
    }
}

FeatureFormat format_from_path(const std::filesystem::path& path) {
    return path.extension() == ".csv" ? FeatureFormat::csv : FeatureFormat::binary;
}

RowMatrix read_fmat(const std::filesystem::path& path) {
    auto in = open_in(path, std::ios::binary);
    std::array<char, 4> magic{};
    std::uint32_t n = 0;
    std::uint32_t d = 0;
    in.read(magic.data(), 4);
    in.read(reinterpret_cast<char*>(&n), sizeof n);
    in.read(reinterpret_cast<char*>(&d), sizeof d);
    if (!in || magic != kMagic) throw ParseError(path.string() + ": missing FMAT header");
    std::vector<float> buf(static_cast<std::size_t>(n) * d);
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in) throw ParseError(path.string() + ": truncated FMAT payload");
    if (in.peek() != std::char_traits<char>::eof()) {
        throw ParseError(path.string() + ": trailing bytes after FMAT payload");
    }
    RowMatrix m(n, d);
    for (std::size_t k = 0; k < buf.size(); ++k) m.data()[k] = static_cast<double>(buf[k]);
    return m;
}

void write_fmat(const std::filesystem::path& path, const Eigen::Ref<const RowMatrix>& m) {
    auto out = open_out(path, std::ios::binary);
    auto n = static_cast<std::uint32_t>(m.rows());
    auto d = static_cast<std::uint32_t>(m.cols());
    out.write(kMagic.data(), 4);
    out.write(reinterpret_cast<const char*>(&n), sizeof n);
    out.write(reinterpret_cast<const char*>(&d), sizeof d);
    std::vector<float> buf(static_cast<std::size_t>(n) * d);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            buf[static_cast<std::size_t>(i) * d + j] = static_cast<float>(m(i, j));
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

FeatureMatrix load_features(const std::filesystem::path& path, FeatureFormat format) {
    return FeatureMatrix(format == FeatureFormat::csv ? read_csv_matrix(path) : read_fmat(path));
}

void save_features(const std::filesystem::path& path, const FeatureMatrix& x, FeatureFormat format) {
    if (format == FeatureFormat::binary) {
        write_fmat(path, x.values());
        return;
    }
    auto out = open_out(path);
    std::array<char, 32> buf{};
    for (std::size_t i = 0; i < x.rows(); ++i) {
        auto row = x.row(i);
        for (std::size_t j = 0; j < row.size(); ++j) {
            if (j) out << ',';
            auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), row[j]);
            out.write(buf.data(), ptr - buf.data());
        }
        out << '\n';
    }
}

std::size_t LabelAssignment::labeled_count() const {
    return static_cast<std::size_t>(
        std::count_if(labels.begin(), labels.end(), [](int y) { return y != kUnlabeled; }));
}

bool LabelAssignment::complete() const {
    if (labeled_count() != n) return false;
    std::vector<bool> seen(static_cast<std::size_t>(num_classes), false);
    for (int y : labels) seen[static_cast<std::size_t>(y)] = true;
    return std::all_of(seen.begin(), seen.end(), [](bool b) { return b; });
}

LabelAssignment LabelAssignment::restricted_to(std::span<const std::size_t> keep) const {
    LabelAssignment out;
    out.n = n;
    out.num_classes = num_classes;
    out.class_names = class_names;
    out.labels.assign(n, kUnlabeled);
    for (auto i : keep) out.labels[i] = labels[i];
    return out;
}

LabelAssignment load_labels(const std::filesystem::path& path, std::optional<std::size_t> n) {
    auto in = open_in(path);
    std::vector<std::pair<std::size_t, int>> entries;
    std::unordered_map<std::string, int> ids;
    LabelAssignment out;
    std::string line;
    std::size_t line_no = 0;
    std::size_t max_index = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto body = trim(line);
        if (body.empty()) continue;
        auto comma = body.find(',');
        if (comma == std::string_view::npos) {
            throw ParseError("line " + std::to_string(line_no) + ": expected 'index,label'");
        }
        auto idx_tok = trim(body.substr(0, comma));
        std::size_t idx = 0;
        auto [ptr, ec] = std::from_chars(idx_tok.data(), idx_tok.data() + idx_tok.size(), idx);
        if (ec != std::errc{} || ptr != idx_tok.data() + idx_tok.size() || idx_tok.empty()) {
            throw ParseError("line " + std::to_string(line_no) + ": bad index '" +
                             std::string(idx_tok) + "'");
        }
        if (n && idx >= *n) {
            throw ValidationError("line " + std::to_string(line_no) + ": index " +
                                  std::to_string(idx) + " out of range for n=" +
                                  std::to_string(*n));
        }
        std::string name(trim(body.substr(comma + 1)));
        auto [it, inserted] = ids.try_emplace(name, static_cast<int>(out.class_names.size()));
        if (inserted) out.class_names.push_back(name);
        entries.emplace_back(idx, it->second);
        max_index = std::max(max_index, idx);
    }
    out.n = n ? *n : (entries.empty() ? 0 : max_index + 1);
    out.num_classes = static_cast<int>(out.class_names.size());
    out.labels.assign(out.n, kUnlabeled);
    for (auto [idx, y] : entries) {
        if (out.labels[idx] != kUnlabeled) {
            throw ValidationError("duplicate label for index " + std::to_string(idx));
        }
        out.labels[idx] = y;
    }
    return out;
}

void save_labels(const std::filesystem::path& path, const LabelAssignment& labels) {
    auto out = open_out(path);
    for (std::size_t i = 0; i < labels.n; ++i) {
        if (!labels.is_labeled(i)) continue;
        out << i << ',' << labels.class_names[static_cast<std::size_t>(labels.labels[i])] << '\n';
    }
}

std::vector<std::size_t> FoldPlan::members(std::size_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < n; ++i)
        if (assignment[i] == fold) out.push_back(i);
    return out;
}

std::vector<std::size_t> FoldPlan::non_members(std::size_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < n; ++i)
        if (assignment[i] != fold) out.push_back(i);
    return out;
}

FoldPlan make_folds(std::size_t n, std::size_t num_folds, std::uint64_t seed) {
    if (num_folds < 2) throw ConfigError("num_folds must be >= 2");
    if (n < num_folds) {
        throw ConfigError("cannot split " + std::to_string(n) + " nodes into " +
                          std::to_string(num_folds) + " folds");
    }
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    FoldPlan plan{n, num_folds, seed, std::vector<std::size_t>(n)};
    for (std::size_t pos = 0; pos < n; ++pos) plan.assignment[order[pos]] = pos % num_folds;
    return plan;
}

SyntheticData synth_blobs(std::size_t n, int c, std::size_t d, double spread, std::uint64_t seed) {
    if (c < 1 || n < static_cast<std::size_t>(c)) throw ConfigError("synth_blobs needs n >= c >= 1");
    if (!(spread > 0.0)) throw ConfigError("synth_blobs needs spread > 0");
    if (d < 1) throw ConfigError("synth_blobs needs d >= 1");

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uniform(-1.0, 1.0);
    std::normal_distribution<double> noise(0.0, spread);

    RowMatrix centers(c, static_cast<Eigen::Index>(d));
    for (Eigen::Index k = 0; k < centers.size(); ++k) centers.data()[k] = uniform(rng);

    RowMatrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    LabelAssignment labels;
    labels.n = n;
    labels.num_classes = c;
    labels.labels.resize(n);
    for (int k = 0; k < c; ++k) labels.class_names.push_back("class" + std::to_string(k));
    for (std::size_t i = 0; i < n; ++i) {
        int y = static_cast<int>(i % static_cast<std::size_t>(c));
        labels.labels[i] = y;
        for (std::size_t j = 0; j < d; ++j) {
            x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                centers(y, static_cast<Eigen::Index>(j)) + noise(rng);
        }
    }
    return {FeatureMatrix(std::move(x)), std::move(labels)};
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace mgcn
