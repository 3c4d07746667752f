#include "ulb/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>

#include "ulb/rng.hpp"

namespace ulb {

void Dataset::validate() const {
    if (size() == 0) throw std::invalid_argument("dataset: empty");
    if (features.cols() != size() || static_cast<int>(subjects.size()) != size())
        throw std::invalid_argument("dataset: inconsistent sizes");
    for (int y : labels)
        if (y < 0 || y >= num_classes) throw std::invalid_argument("dataset: label out of range");
}

namespace {

// Largest-remainder allocation of `total` slots over weights. Ties go to the
// lower index, so non-increasing weights yield non-increasing counts.
std::vector<int> allocate_counts(const std::vector<double>& weights, int total) {
    const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
    std::vector<int> counts(weights.size());
    std::vector<std::pair<double, std::size_t>> remainders;
    int assigned = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const double exact = static_cast<double>(total) * weights[i] / wsum;
        counts[i] = static_cast<int>(std::floor(exact));
        assigned += counts[i];
        remainders.emplace_back(exact - std::floor(exact), i);
    }
    std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (int i = 0; i < total - assigned; ++i) counts[remainders[static_cast<std::size_t>(i)].second] += 1;
    return counts;
}

}  // namespace

Dataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
    if (spec.n_subjects < 1 || spec.num_classes < 2 || spec.feature_dim < 1 ||
        spec.min_examples_per_subject < 1 || spec.max_examples_per_subject < spec.min_examples_per_subject)
        throw std::invalid_argument("generate_synthetic: invalid spec");

    Rng rng(derive_seed(seed, "synthetic"));

    std::vector<double> class_weights_raw(static_cast<std::size_t>(spec.num_classes));
    for (int k = 0; k < spec.num_classes; ++k)
        class_weights_raw[static_cast<std::size_t>(k)] =
            std::pow(static_cast<double>(k + 1), -spec.imbalance_exponent);
    const std::vector<int> subjects_per_class = allocate_counts(class_weights_raw, spec.n_subjects);

    Eigen::MatrixXd centers(spec.feature_dim, spec.num_classes);
    for (int k = 0; k < spec.num_classes; ++k)
        for (int d = 0; d < spec.feature_dim; ++d) centers(d, k) = spec.class_separation * rng.normal();

    std::vector<int> subject_class;
    subject_class.reserve(static_cast<std::size_t>(spec.n_subjects));
    for (int k = 0; k < spec.num_classes; ++k)
        for (int i = 0; i < subjects_per_class[static_cast<std::size_t>(k)]; ++i) subject_class.push_back(k);

    Dataset ds;
    ds.num_classes = spec.num_classes;
    std::vector<Eigen::VectorXf> columns;
    for (int s = 0; s < spec.n_subjects; ++s) {
        const int cls = subject_class[static_cast<std::size_t>(s)];
        const int count = spec.min_examples_per_subject +
                          static_cast<int>(rng.below(static_cast<std::uint64_t>(
                              spec.max_examples_per_subject - spec.min_examples_per_subject + 1)));
        Eigen::VectorXd offset(spec.feature_dim);
        for (int d = 0; d < spec.feature_dim; ++d) offset[d] = spec.subject_sigma * rng.normal();
        for (int e = 0; e < count; ++e) {
            Eigen::VectorXd x = centers.col(cls) + offset;
            for (int d = 0; d < spec.feature_dim; ++d) x[d] += spec.noise_sigma * rng.normal();
            columns.push_back(x.cast<float>());
            ds.labels.push_back(cls);
            ds.subjects.push_back(s);
        }
    }
    ds.features.resize(spec.feature_dim, static_cast<Eigen::Index>(columns.size()));
    for (std::size_t i = 0; i < columns.size(); ++i) ds.features.col(static_cast<Eigen::Index>(i)) = columns[i];
    ds.validate();
    return ds;
}

Splits split_train_val_test(const Dataset& ds, double train_fraction, double val_fraction,
                            double test_fraction, std::uint64_t seed) {
    ds.validate();
    if (!(train_fraction > 0) || val_fraction < 0 || test_fraction < 0)
        throw std::invalid_argument("split: fractions must be positive");
    if (std::abs(train_fraction + val_fraction + test_fraction - 1.0) > 1e-9)
        throw std::invalid_argument("split: fractions must sum to 1");

    const int n = ds.size();
    const std::vector<int> sizes = allocate_counts({train_fraction, val_fraction, test_fraction}, n);
    for (int s : sizes)
        if (s < 1) throw std::invalid_argument("split: dataset too small for at least one example per split");

    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, "train-val-test"));
    rng.shuffle(order);

    Splits sp;
    sp.train.assign(order.begin(), order.begin() + sizes[0]);
    sp.val.assign(order.begin() + sizes[0], order.begin() + sizes[0] + sizes[1]);
    sp.test.assign(order.begin() + sizes[0] + sizes[1], order.end());
    std::sort(sp.train.begin(), sp.train.end());
    std::sort(sp.val.begin(), sp.val.end());
    std::sort(sp.test.begin(), sp.test.end());
    return sp;
}

Splits split_retain_forget(const Dataset& ds, const Splits& partial, double forget_fraction,
                           std::uint64_t seed) {
    if (!(forget_fraction > 0.0) || !(forget_fraction < 1.0))
        throw std::invalid_argument("split_retain_forget: fraction must be in (0,1)");
    if (partial.train.empty()) throw std::invalid_argument("split_retain_forget: empty training set");

    // subject -> train examples, subjects in first-appearance order
    std::vector<int> subject_order;
    std::vector<std::vector<int>> members;
    {
        std::vector<int> slot(ds.subjects.size(), -1);
        std::vector<int> seen;
        for (int idx : partial.train) {
            const int s = ds.subjects[static_cast<std::size_t>(idx)];
            if (slot[static_cast<std::size_t>(s)] < 0) {
                slot[static_cast<std::size_t>(s)] = static_cast<int>(subject_order.size());
                subject_order.push_back(s);
                members.emplace_back();
            }
            members[static_cast<std::size_t>(slot[static_cast<std::size_t>(s)])].push_back(idx);
        }
    }
    if (subject_order.size() < 2)
        throw std::invalid_argument("split_retain_forget: need at least two subjects in the training set");

    std::vector<int> pick(subject_order.size());
    std::iota(pick.begin(), pick.end(), 0);
    Rng rng(derive_seed(seed, "retain-forget"));
    rng.shuffle(pick);

    const double target = forget_fraction * static_cast<double>(partial.train.size());
    Splits sp = partial;
    sp.retain.clear();
    sp.forget.clear();
    std::size_t taken = 0;
    std::vector<bool> in_forget(subject_order.size(), false);
    for (int p : pick) {
        if (static_cast<double>(sp.forget.size()) >= target) break;
        in_forget[static_cast<std::size_t>(p)] = true;
        const auto& m = members[static_cast<std::size_t>(p)];
        sp.forget.insert(sp.forget.end(), m.begin(), m.end());
        ++taken;
    }
    if (taken == subject_order.size())
        throw std::invalid_argument("split_retain_forget: forget set would swallow every subject");
    for (std::size_t g = 0; g < subject_order.size(); ++g)
        if (!in_forget[g]) sp.retain.insert(sp.retain.end(), members[g].begin(), members[g].end());
    std::sort(sp.retain.begin(), sp.retain.end());
    std::sort(sp.forget.begin(), sp.forget.end());
    return sp;
}

ClassWeights class_weights(const Dataset& ds, const std::vector<int>& idx) {
    if (idx.empty()) throw std::invalid_argument("class_weights: empty index set");
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(ds.num_classes);
    for (int i : idx) counts[ds.labels[static_cast<std::size_t>(i)]] += 1.0;
    ClassWeights w;
    w.values.resize(ds.num_classes);
    for (int k = 0; k < ds.num_classes; ++k) {
        if (counts[k] == 0.0)
            throw std::invalid_argument("class_weights: class " + std::to_string(k) + " absent from index set");
        w.values[k] = 1.0 / counts[k];
    }
    return w;
}

void save_csv(const Dataset& ds, const std::filesystem::path& path) {
    ds.validate();
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
    os << "subject_id,label";
    for (int d = 0; d < ds.feature_dim(); ++d) os << ",f_" << (d + 1);
    os << "\n";
    char buf[48];
    for (int i = 0; i < ds.size(); ++i) {
        os << ds.subjects[static_cast<std::size_t>(i)] << ',' << ds.labels[static_cast<std::size_t>(i)];
        for (int d = 0; d < ds.feature_dim(); ++d) {
            // 9 significant digits round-trips binary32 exactly
            std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(ds.features(d, i)));
            os << ',' << buf;
        }
        os << "\n";
    }
    if (!os) throw std::runtime_error("write failed: " + path.string());
}

namespace {

[[noreturn]] void csv_error(const std::filesystem::path& path, int line, const std::string& what) {
    throw std::runtime_error(path.string() + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open: " + path.string());
    Dataset ds;
    std::string line;
    int line_no = 0;
    int dim = -1;
    std::vector<Eigen::VectorXf> columns;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (line_no == 1 && !fields.empty() && fields[0] == "subject_id") continue;  // header
        if (fields.size() < 3) csv_error(path, line_no, "expected subject_id,label,features");
        int subject = 0, label = 0;
        auto parse_int = [&](const std::string& s, int& out) {
            auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
            return ec == std::errc() && p == s.data() + s.size();
        };
        if (!parse_int(fields[0], subject)) csv_error(path, line_no, "bad subject id '" + fields[0] + "'");
        if (!parse_int(fields[1], label) || label < 0) csv_error(path, line_no, "bad label '" + fields[1] + "'");
        const int d = static_cast<int>(fields.size()) - 2;
        if (dim < 0) dim = d;
        if (d != dim) csv_error(path, line_no, "inconsistent feature count");
        Eigen::VectorXf x(dim);
        for (int j = 0; j < dim; ++j) {
            try {
                std::size_t used = 0;
                x[j] = std::stof(fields[static_cast<std::size_t>(j) + 2], &used);
                if (used != fields[static_cast<std::size_t>(j) + 2].size()) throw std::invalid_argument("");
            } catch (const std::exception&) {
                csv_error(path, line_no, "bad feature value '" + fields[static_cast<std::size_t>(j) + 2] + "'");
            }
        }
        columns.push_back(std::move(x));
        ds.subjects.push_back(subject);
        ds.labels.push_back(label);
    }
    if (columns.empty()) throw std::runtime_error(path.string() + ": no data rows");
    ds.features.resize(dim, static_cast<Eigen::Index>(columns.size()));
    for (std::size_t i = 0; i < columns.size(); ++i) ds.features.col(static_cast<Eigen::Index>(i)) = columns[i];
    ds.num_classes = *std::max_element(ds.labels.begin(), ds.labels.end()) + 1;
    ds.validate();
    return ds;
}

}  // namespace ulb
