#include "biliscope/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "biliscope/features.hpp"
#include "biliscope/random.hpp"

namespace biliscope {

void ConfusionCounts::add(Label truth, Label predicted) noexcept {
    if (truth == Label::Dilated) {
        ++(predicted == Label::Dilated ? tp : fn);
    } else {
        ++(predicted == Label::Dilated ? fp : tn);
    }
}

namespace {

double ratio(double num, double den, bool& degenerate) noexcept {
    degenerate = den == 0.0;
    return degenerate ? 0.0 : num / den;
}

}  // namespace

Metrics metrics(const ConfusionCounts& c) noexcept {
    const auto tp = static_cast<double>(c.tp);
    const auto tn = static_cast<double>(c.tn);
    const auto fp = static_cast<double>(c.fp);
    const auto fn = static_cast<double>(c.fn);
    Metrics m;
    m.sensitivity = ratio(tp, tp + fn, m.sensitivity_degenerate);
    m.precision = ratio(tp, tp + fp, m.precision_degenerate);
    m.specificity = ratio(tn, tn + fp, m.specificity_degenerate);
    m.f1 = ratio(2.0 * m.sensitivity * m.precision, m.sensitivity + m.precision, m.f1_degenerate);
    m.accuracy = ratio(tp + tn, tp + tn + fp + fn, m.accuracy_degenerate);
    return m;
}

ConfusionCounts confusion(std::span<const Label> truth, std::span<const Label> predicted) {
    if (truth.size() != predicted.size()) {
        throw Error(ErrorKind::DimensionMismatch, "confusion: truth and predictions differ in length");
    }
    ConfusionCounts c;
    for (std::size_t i = 0; i < truth.size(); ++i) c.add(truth[i], predicted[i]);
    return c;
}

RocCurve roc_auc(std::span<const double> scores, std::span<const Label> labels) {
    if (scores.size() != labels.size()) throw Error(ErrorKind::DimensionMismatch, "roc: scores and labels differ in length");
    const auto positives = static_cast<double>(std::count(labels.begin(), labels.end(), Label::Dilated));
    const auto negatives = static_cast<double>(labels.size()) - positives;
    if (positives == 0.0 || negatives == 0.0) {
        throw Error(ErrorKind::UndefinedAuc, "roc: AUC needs both dilated and normal samples");
    }
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    RocCurve roc;
    roc.points.push_back(RocPoint{std::numeric_limits<double>::infinity(), 0.0, 0.0});
    double tp = 0.0;
    double fp = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        const double threshold = scores[order[i]];
        while (i < order.size() && scores[order[i]] == threshold) {
            (labels[order[i]] == Label::Dilated ? tp : fp) += 1.0;
            ++i;
        }
        const RocPoint prev = roc.points.back();
        const RocPoint next{threshold, fp / negatives, tp / positives};
        roc.auc += (next.fpr - prev.fpr) * (next.tpr + prev.tpr) / 2.0;
        roc.points.push_back(next);
    }
    return roc;
}

std::vector<int> stratified_folds(std::span<const Label> labels, int folds, std::uint64_t seed) {
    const std::size_t n = labels.size();
    if (folds < 2) throw Error(ErrorKind::InvalidArgument, "cross-validation needs at least 2 folds");
    if (static_cast<std::size_t>(folds) > n) {
        throw Error(ErrorKind::Stratification,
                    std::to_string(folds) + " folds requested for only " + std::to_string(n) + " rows");
    }
    const bool leave_one_out = static_cast<std::size_t>(folds) == n;
    Rng rng(seed);
    std::vector<int> fold_of(n, 0);
    std::size_t dealt = 0;
    for (const Label cls : {Label::Dilated, Label::Normal}) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < n; ++i) {
            if (labels[i] == cls) members.push_back(i);
        }
        if (!leave_one_out && members.size() < static_cast<std::size_t>(folds)) {
            throw Error(ErrorKind::Stratification, "class '" + std::string(to_string(cls)) + "' has " +
                                                       std::to_string(members.size()) + " rows, fewer than " +
                                                       std::to_string(folds) + " folds");
        }
        rng.shuffle(members);
        for (const auto i : members) fold_of[i] = static_cast<int>(dealt++ % static_cast<std::size_t>(folds));
    }
    return fold_of;
}

ModelReport cross_validate(const ModelSpec& spec, const LabeledDataset& data, const CvOptions& options) {
    data.validate();
    ModelReport report;
    report.kind = spec.kind;
    report.folds = options.folds;
    report.fold_of_row = stratified_folds(data.labels, options.folds, options.rng_seed);
    report.scores.assign(data.size(), 0.0);
    std::vector<Label> predicted(data.size(), Label::Normal);

    for (int k = 0; k < options.folds; ++k) {
        std::vector<std::size_t> train_idx;
        std::vector<std::size_t> test_idx;
        for (std::size_t i = 0; i < data.size(); ++i) {
            (report.fold_of_row[i] == k ? test_idx : train_idx).push_back(i);
        }
        LabeledDataset train = data.subset(train_idx);
        std::vector<std::vector<double>> test_rows;
        for (const auto i : test_idx) test_rows.push_back(data.rows[i]);
        if (options.per_fold_scaling) {
            const ScalerState scaler = fit_scaler(train.rows);
            for (auto& row : train.rows) row = apply_scaler(scaler, row);
            for (auto& row : test_rows) row = apply_scaler(scaler, row);
        }
        const TrainedModel model = train_model(spec, train);
        for (std::size_t t = 0; t < test_idx.size(); ++t) {
            const double score = model.predict_score(test_rows[t]);
            report.scores[test_idx[t]] = score;
            predicted[test_idx[t]] = label_for_score(score);
        }
    }
    report.counts = confusion(data.labels, predicted);
    report.metrics = metrics(report.counts);
    report.roc = roc_auc(report.scores, data.labels);
    return report;
}

std::string report_json(const ReportContext& context, const std::vector<ModelReport>& reports) {
    using nlohmann::ordered_json;
    ordered_json root;
    root["aggregation"] = "pooled";
    root["feature_mode"] = context.feature_mode;
    root["features"] = context.feature_names;
    root["rows"] = context.rows;
    root["excluded_rows"] = context.excluded_rows;
    root["folds"] = context.cv.folds;
    root["cv_seed"] = context.cv.rng_seed;
    root["per_fold_scaling"] = context.cv.per_fold_scaling;
    ordered_json models = ordered_json::array();
    for (const auto& r : reports) {
        ordered_json m;
        m["model"] = std::string(to_string(r.kind));
        m["counts"] = {{"tp", r.counts.tp}, {"tn", r.counts.tn}, {"fp", r.counts.fp}, {"fn", r.counts.fn}};
        m["accuracy"] = r.metrics.accuracy;
        m["sensitivity"] = r.metrics.sensitivity;
        m["precision"] = r.metrics.precision;
        m["f1"] = r.metrics.f1;
        m["specificity"] = r.metrics.specificity;
        m["auc"] = r.roc.auc;
        ordered_json degenerate = ordered_json::array();
        if (r.metrics.sensitivity_degenerate) degenerate.push_back("sensitivity");
        if (r.metrics.precision_degenerate) degenerate.push_back("precision");
        if (r.metrics.specificity_degenerate) degenerate.push_back("specificity");
        if (r.metrics.f1_degenerate) degenerate.push_back("f1");
        if (r.metrics.accuracy_degenerate) degenerate.push_back("accuracy");
        m["degenerate"] = degenerate;
        ordered_json roc = ordered_json::array();
        for (const auto& p : r.roc.points) {
            // +inf is not representable in JSON; the first point carries null.
            ordered_json point;
            point["threshold"] = std::isfinite(p.threshold) ? ordered_json(p.threshold) : ordered_json(nullptr);
            point["fpr"] = p.fpr;
            point["tpr"] = p.tpr;
            roc.push_back(point);
        }
        m["roc"] = roc;
        models.push_back(m);
    }
    root["models"] = models;
    return root.dump(2) + "\n";
}

}  // namespace biliscope
