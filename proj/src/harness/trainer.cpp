#include "gwa/harness/trainer.hpp"

#include "gwa/error.hpp"
#include "gwa/harness/analysis.hpp"
#include "gwa/trace.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace gwa::harness {

void TrainerConfig::validate() const
{
    auto fail = [](const std::string& msg) { throw Error(ErrorCode::ConfigError, msg); };
    if (!(optimizer.lr > 0.0)) fail("lr must be positive");
    if (epochs == 0) fail("epochs must be positive");
    if (batch_size == 0) fail("batch_size must be positive");
    if (!(label_noise >= 0.0 && label_noise <= 1.0)) fail("label_noise must lie in [0, 1]");
    if (random_labels && label_noise > 0.0) fail("label_noise and random_labels are mutually exclusive");
    if (!(val_fraction >= 0.0 && val_fraction < 1.0)) fail("val_fraction must lie in [0, 1)");
    if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) fail("warmup_fraction must lie in [0, 1)");
    if (pretrain_epochs > 0 && pretrain_size == 0) fail("pretrain_epochs needs pretrain_size > 0");
}

const StopDecision* RunReport::decision(StopCriterion criterion) const
{
    for (const auto& d : decisions) {
        if (d.criterion == criterion) {
            return &d;
        }
    }
    return nullptr;
}

namespace {

double accuracy(const std::vector<std::uint32_t>& predicted, const std::vector<std::uint32_t>& labels)
{
    if (labels.empty()) {
        return 0.0;
    }
    std::size_t hit = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        hit += predicted[i] == labels[i] ? 1 : 0;
    }
    return static_cast<double>(hit) / static_cast<double>(labels.size());
}

void fit_epochs(Classifier& model, Optimizer& optimizer, const Dataset& data, std::size_t epochs,
                std::size_t batch_size, std::mt19937_64& rng)
{
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<float> x;
    std::vector<std::uint32_t> labels;
    std::vector<double> grad;
    ForwardPass pass;
    for (std::size_t e = 0; e < epochs; ++e) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += batch_size) {
            const std::size_t m = std::min(batch_size, order.size() - start);
            x.clear();
            labels.clear();
            for (std::size_t i = 0; i < m; ++i) {
                const auto r = data.row(order[start + i]);
                x.insert(x.end(), r.begin(), r.end());
                labels.push_back(data.labels[order[start + i]]);
            }
            model.forward(x, m, pass);
            model.backward(x, pass, labels, grad);
            optimizer.step(model.parameters(), grad);
        }
    }
}

std::optional<double> opt_num(const nlohmann::json& j, const char* key)
{
    if (!j.contains(key) || j.at(key).is_null()) {
        return std::nullopt;
    }
    return j.at(key).get<double>();
}

nlohmann::json num_or_null(const std::optional<double>& v)
{
    return v && std::isfinite(*v) ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

} // namespace

TrainResult train(const TrainerConfig& config, const TrainOutputs& outputs)
{
    config.validate();
    TrainResult result;
    result.data = make_splits(config.dataset, config.val_fraction,
                              CorruptionConfig{config.label_noise, config.random_labels},
                              config.seed, config.pretrain_epochs > 0 ? config.pretrain_size : 0);
    const Dataset& train_set = result.data.train;
    const std::size_t classes = train_set.classes;

    std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
    Classifier model(train_set.dim, classes, config.model, rng);
    if (config.pretrain_epochs > 0) {
        Optimizer pre(config.optimizer, model.parameters().size());
        fit_epochs(model, pre, result.data.pretrain, config.pretrain_epochs, config.batch_size, rng);
    }
    Optimizer optimizer(config.optimizer, model.parameters().size());

    std::optional<JlProjection> projection;
    if (config.projection.enabled) {
        if (config.projection.dim == 0 || config.projection.dim > model.latent_dim()) {
            throw Error(ErrorCode::ConfigError, "projection.dim must lie in [1, " +
                                                    std::to_string(model.latent_dim()) + "]");
        }
        projection.emplace(model.latent_dim(), config.projection.dim, config.projection.seed);
    }

    const std::size_t n = train_set.size();
    const std::size_t b = config.batch_size;
    const std::size_t steps_per_epoch = (n + b - 1) / b;
    const std::size_t latent_dim = model.latent_dim();

    TraceHeader header;
    header.dim = static_cast<std::uint32_t>(latent_dim);
    header.classes = static_cast<std::uint32_t>(classes);
    header.dataset_size = n;
    header.batch_size = static_cast<std::uint32_t>(b);
    header.steps_per_epoch = static_cast<std::uint32_t>(steps_per_epoch);
    header.flags = kTraceBiasPresent;
    std::optional<TraceWriter> writer;
    if (outputs.trace) {
        writer.emplace(*outputs.trace, header);
    }

    result.series.steps_per_epoch = header.steps_per_epoch;
    result.series.batch_size = header.batch_size;
    result.series.dataset_size = n;
    result.series.total_steps = steps_per_epoch * config.epochs;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<float> x;
    std::vector<std::uint32_t> labels;
    std::vector<std::uint64_t> ids;
    std::vector<float> latents;
    std::vector<float> probs;
    std::vector<float> head_w;
    std::vector<float> head_b;
    std::vector<double> grad;
    ForwardPass pass;

    auto snapshot_head = [&] {
        const auto w = model.head_weights();
        const auto bias = model.head_bias();
        head_w.assign(w.begin(), w.end());
        head_b.assign(bias.begin(), bias.end());
    };

    auto& report = result.report;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        EpochDistribution dist;
        dist.epoch = static_cast<std::uint32_t>(epoch);
        dist.beta = config.gwa.beta;
        double loss_sum = 0.0;

        for (std::size_t t = 0; t < steps_per_epoch; ++t) {
            const std::size_t start = t * b;
            const std::size_t m = std::min(b, n - start);
            x.clear();
            labels.clear();
            ids.clear();
            for (std::size_t i = 0; i < m; ++i) {
                const std::size_t idx = order[start + i];
                const auto r = train_set.row(idx);
                x.insert(x.end(), r.begin(), r.end());
                labels.push_back(train_set.labels[idx]);
                ids.push_back(idx);
            }
            model.forward(x, m, pass);
            const double loss = Classifier::loss(pass, labels, classes);
            if (!std::isfinite(loss)) {
                throw Error(ErrorCode::NonFiniteLoss, "loss diverged in epoch " + std::to_string(epoch));
            }
            loss_sum += loss * static_cast<double>(m);

            // Telemetry is float32; scoring uses exactly what the trace carries.
            snapshot_head();
            latents.assign(pass.latents.begin(), pass.latents.end());
            probs.assign(pass.probs.begin(), pass.probs.end());
            if (writer) {
                writer->write_step(static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(t),
                                   head_w, head_b, ids, latents, probs, labels);
            }
            const auto snapshot = HeadSnapshot::make(classes, latent_dim, head_w, head_b,
                                                     static_cast<std::uint32_t>(epoch),
                                                     static_cast<std::uint32_t>(t));
            const PreparedHead prepared(projection ? project_head(*projection, snapshot) : snapshot,
                                        config.alignment);
            for (std::size_t i = 0; i < m; ++i) {
                const std::span<const float> z(latents.data() + i * latent_dim, latent_dim);
                const std::span<const float> p(probs.data() + i * classes, classes);
                const auto s = projection ? prepared.score(ids[i], projection->apply(z), p, labels[i])
                                          : prepared.score(ids[i], z, p, labels[i]);
                accumulate(dist, s);
                if (outputs.alignment) {
                    write_alignment_row(*outputs.alignment, s);
                }
                if (outputs.retain_scores) {
                    result.scores.push_back(s);
                }
            }

            model.backward(x, pass, labels, grad);
            optimizer.step(model.parameters(), grad);
        }

        const auto summary = summarize(dist, config.gwa);
        result.series.epochs.push_back(summary);

        EpochRecord rec;
        rec.epoch = static_cast<std::uint32_t>(epoch);
        rec.train_loss = loss_sum / static_cast<double>(n);
        auto train_pred = model.predict(train_set.features, n);
        rec.train_accuracy = accuracy(train_pred, train_set.labels);
        rec.val_accuracy = accuracy(model.predict(result.data.val.features, result.data.val.size()),
                                    result.data.val.labels);
        rec.test_accuracy = accuracy(model.predict(result.data.test.features, result.data.test.size()),
                                     result.data.test.labels);
        rec.gwa = summary.eligible() ? summary.gwa : std::nullopt;
        rec.m1 = summary.m1;
        rec.excess_kurtosis = summary.excess_kurtosis;
        report.epochs.push_back(rec);
        result.train_predictions.push_back(std::move(train_pred));
    }

    if (writer) {
        // Weights-only record carrying the final head, so the last epoch has
        // an end-of-epoch reference for offline recomputation.
        snapshot_head();
        writer->write_step(static_cast<std::uint32_t>(config.epochs), 0, head_w, head_b, {}, {}, {}, {});
        writer->flush();
    }

    report.gwa_series = result.series.epochs;
    report.notes.emplace_back("desk-scale run: correlation and precision thresholds used to grade it are looser "
                              "than values reported for large vision models");
    if (projection) {
        report.notes.push_back("alignment scored after projecting latents and head with one Gaussian matrix (k = " +
                               std::to_string(config.projection.dim) + ", seed = " +
                               std::to_string(config.projection.seed) + ")");
    }
    if (config.epochs >= 2) {
        const auto lw = labelwave(result.train_predictions, config.warmup_fraction);
        for (std::size_t e = 0; e < report.epochs.size(); ++e) {
            report.epochs[e].labelwave_change = lw.changes.change_fraction[e];
        }
        report.decisions.push_back(lw.decision);
    }
    std::optional<StopDecision> primary;
    try {
        report.decisions.push_back(select_scratch(result.series, config.warmup_fraction));
        primary = report.decisions.back();
    } catch (const Error& e) {
        report.notes.emplace_back(std::string("gwa_scratch: ") + e.what());
    }
    if (config.mode == StopMode::Finetune) {
        try {
            report.decisions.push_back(select_finetune(result.series, config.finetune_window, 0.0,
                                                       config.warmup_fraction));
            primary = report.decisions.back();
        } catch (const Error& e) {
            report.notes.emplace_back(std::string("gwa_finetune: ") + e.what());
        }
    }
    std::vector<double> val;
    std::vector<double> test;
    for (const auto& r : report.epochs) {
        val.push_back(r.val_accuracy);
        test.push_back(r.test_accuracy);
    }
    report.decisions.push_back(select_by_metric(val, StopCriterion::ValAccuracy));
    report.oracle_best_test_epoch = select_by_metric(test, StopCriterion::ValAccuracy).selected_epoch;

    const bool any_flipped =
        std::any_of(result.data.flipped.begin(), result.data.flipped.end(), [](auto f) { return f != 0; });
    if (primary && outputs.retain_scores && any_flipped) {
        const auto ranking = rank_samples(result.scores, primary->selected_epoch, &result.data.flipped);
        MislabelMetrics mm;
        mm.epoch = primary->selected_epoch;
        mm.k = ranking.k;
        mm.precision_at_k = ranking.precision_at_k;
        mm.chance_rate = ranking.chance_rate;
        double sum_f = 0.0;
        double sum_c = 0.0;
        std::size_t nf = 0;
        std::size_t nc = 0;
        for (const auto& r : ranking.ranking) {
            if (r.flipped.value_or(false)) {
                sum_f += r.gamma;
                ++nf;
            } else {
                sum_c += r.gamma;
                ++nc;
            }
        }
        mm.flipped = nf;
        if (nf > 0) mm.mean_gamma_flipped = sum_f / static_cast<double>(nf);
        if (nc > 0) mm.mean_gamma_clean = sum_c / static_cast<double>(nc);
        report.mislabel = mm;
    }
    return result;
}

nlohmann::json to_json(const RunReport& report)
{
    nlohmann::json epochs = nlohmann::json::array();
    for (const auto& e : report.epochs) {
        epochs.push_back({{"epoch", e.epoch},
                          {"train_loss", e.train_loss},
                          {"train_accuracy", e.train_accuracy},
                          {"val_accuracy", e.val_accuracy},
                          {"test_accuracy", e.test_accuracy},
                          {"gwa", num_or_null(e.gwa)},
                          {"m1", e.m1},
                          {"excess_kurtosis", num_or_null(e.excess_kurtosis)},
                          {"labelwave_change", num_or_null(e.labelwave_change)}});
    }
    nlohmann::json series = nlohmann::json::array();
    for (const auto& s : report.gwa_series) {
        series.push_back(to_json(s));
    }
    nlohmann::json decisions = nlohmann::json::array();
    for (const auto& d : report.decisions) {
        decisions.push_back(to_json(d));
    }
    nlohmann::json j = {{"epochs", epochs},
                        {"gwa_series", series},
                        {"decisions", decisions},
                        {"oracle_best_test_epoch", report.oracle_best_test_epoch},
                        {"trace_path", report.trace_path},
                        {"alignment_path", report.alignment_path},
                        {"flips_path", report.flips_path},
                        {"notes", report.notes}};
    if (report.mislabel) {
        const auto& m = *report.mislabel;
        j["mislabel"] = {{"epoch", m.epoch},
                         {"flipped", m.flipped},
                         {"k", m.k},
                         {"precision_at_k", num_or_null(m.precision_at_k)},
                         {"chance_rate", num_or_null(m.chance_rate)},
                         {"mean_gamma_flipped", num_or_null(m.mean_gamma_flipped)},
                         {"mean_gamma_clean", num_or_null(m.mean_gamma_clean)}};
    } else {
        j["mislabel"] = nullptr;
    }
    return j;
}

RunReport run_report_from_json(const nlohmann::json& j)
{
    try {
        RunReport r;
        for (const auto& e : j.at("epochs")) {
            EpochRecord rec;
            rec.epoch = e.at("epoch").get<std::uint32_t>();
            rec.train_loss = e.value("train_loss", 0.0);
            rec.train_accuracy = e.at("train_accuracy").get<double>();
            rec.val_accuracy = e.at("val_accuracy").get<double>();
            rec.test_accuracy = e.at("test_accuracy").get<double>();
            rec.gwa = opt_num(e, "gwa");
            rec.m1 = e.value("m1", 0.0);
            rec.excess_kurtosis = opt_num(e, "excess_kurtosis");
            rec.labelwave_change = opt_num(e, "labelwave_change");
            r.epochs.push_back(rec);
        }
        for (const auto& s : j.value("gwa_series", nlohmann::json::array())) {
            r.gwa_series.push_back(epoch_summary_from_json(s));
        }
        for (const auto& d : j.value("decisions", nlohmann::json::array())) {
            r.decisions.push_back(stop_decision_from_json(d));
        }
        r.oracle_best_test_epoch = j.value("oracle_best_test_epoch", 0u);
        r.trace_path = j.value("trace_path", "");
        r.alignment_path = j.value("alignment_path", "");
        r.flips_path = j.value("flips_path", "");
        r.notes = j.value("notes", std::vector<std::string>{});
        if (j.contains("mislabel") && !j.at("mislabel").is_null()) {
            const auto& m = j.at("mislabel");
            MislabelMetrics mm;
            mm.epoch = m.at("epoch").get<std::uint32_t>();
            mm.flipped = m.at("flipped").get<std::size_t>();
            mm.k = m.at("k").get<std::size_t>();
            mm.precision_at_k = opt_num(m, "precision_at_k");
            mm.chance_rate = opt_num(m, "chance_rate");
            mm.mean_gamma_flipped = opt_num(m, "mean_gamma_flipped");
            mm.mean_gamma_clean = opt_num(m, "mean_gamma_clean");
            r.mislabel = mm;
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("malformed run report: ") + e.what());
    }
}

} // namespace gwa::harness
