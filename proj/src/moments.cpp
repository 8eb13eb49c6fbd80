#include "gwa/moments.hpp"

#include "gwa/error.hpp"

#include <cmath>

namespace gwa {

void CentralMoments::add(double x) noexcept
{
    const double n1 = static_cast<double>(n_);
    ++n_;
    const double n = static_cast<double>(n_);
    const double delta = x - mean_;
    const double delta_n = delta / n;
    const double delta_n2 = delta_n * delta_n;
    const double term1 = delta * delta_n * n1;
    mean_ += delta_n;
    sum4_ += term1 * delta_n2 * (n * n - 3.0 * n + 3.0) + 6.0 * delta_n2 * sum2_ -
             4.0 * delta_n * sum3_;
    sum3_ += term1 * delta_n * (n - 2.0) - 3.0 * delta_n * sum2_;
    sum2_ += term1;
}

void CentralMoments::merge(const CentralMoments& other) noexcept
{
    if (other.n_ == 0) {
        return;
    }
    if (n_ == 0) {
        *this = other;
        return;
    }
    const double na = static_cast<double>(n_);
    const double nb = static_cast<double>(other.n_);
    const double n = na + nb;
    const double delta = other.mean_ - mean_;
    const double delta2 = delta * delta;
    const double delta3 = delta2 * delta;
    const double delta4 = delta2 * delta2;

    const double sum2 = sum2_ + other.sum2_ + delta2 * na * nb / n;
    const double sum3 = sum3_ + other.sum3_ + delta3 * na * nb * (na - nb) / (n * n) +
                        3.0 * delta * (na * other.sum2_ - nb * sum2_) / n;
    const double sum4 = sum4_ + other.sum4_ +
                        delta4 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n) +
                        6.0 * delta2 * (na * na * other.sum2_ + nb * nb * sum2_) / (n * n) +
                        4.0 * delta * (na * other.sum3_ - nb * sum3_) / n;

    mean_ = (na * mean_ + nb * other.mean_) / n;
    sum2_ = sum2;
    sum3_ = sum3;
    sum4_ = sum4;
    n_ += other.n_;
}

double CentralMoments::moment(int k) const noexcept
{
    if (n_ == 0) {
        return 0.0;
    }
    const double n = static_cast<double>(n_);
    switch (k) {
    case 1: return mean_;
    case 2: return sum2_ / n;
    case 3: return sum3_ / n;
    case 4: return sum4_ / n;
    default: return 0.0;
    }
}

CentralMoments CentralMoments::two_pass(std::span<const double> values)
{
    CentralMoments m;
    if (values.empty()) {
        return m;
    }
    double sum = 0.0;
    for (double v : values) {
        sum += v;
    }
    m.n_ = values.size();
    m.mean_ = sum / static_cast<double>(values.size());
    for (double v : values) {
        const double d = v - m.mean_;
        const double d2 = d * d;
        m.sum2_ += d2;
        m.sum3_ += d2 * d;
        m.sum4_ += d2 * d2;
    }
    return m;
}

std::vector<std::string> flag_names(std::uint32_t flags)
{
    std::vector<std::string> names;
    if (flags & kFlagDegenerate) names.emplace_back("degenerate");
    if (flags & kFlagUnstable) names.emplace_back("unstable");
    if (flags & kFlagTooFewSamples) names.emplace_back("too_few_samples");
    if (flags & kFlagBimodal) names.emplace_back("bimodal");
    return names;
}

std::uint32_t flags_from_names(const std::vector<std::string>& names)
{
    std::uint32_t flags = kFlagNone;
    for (const auto& name : names) {
        if (name == "degenerate") flags |= kFlagDegenerate;
        else if (name == "unstable") flags |= kFlagUnstable;
        else if (name == "too_few_samples") flags |= kFlagTooFewSamples;
        else if (name == "bimodal") flags |= kFlagBimodal;
        else throw Error(ErrorCode::InvalidArgument, "unknown epoch flag '" + name + "'");
    }
    return flags;
}

void accumulate(EpochDistribution& dist, const AlignmentScore& score)
{
    if (score.epoch != dist.epoch) {
        throw Error(ErrorCode::EpochMismatch, "score from epoch " + std::to_string(score.epoch) +
                                                  " fed to epoch " + std::to_string(dist.epoch));
    }
    if (!score.gamma) {
        ++dist.excluded;
        return;
    }
    dist.moments.add(*score.gamma);
    if (dist.retain_raw) {
        dist.raw_scores.emplace_back(score.sample_id, *score.gamma);
    }
}

EpochDistribution merge(const EpochDistribution& a, const EpochDistribution& b)
{
    if (a.epoch != b.epoch) {
        throw Error(ErrorCode::EpochMismatch, "cannot merge epochs " + std::to_string(a.epoch) +
                                                  " and " + std::to_string(b.epoch));
    }
    if (a.beta != b.beta) {
        throw Error(ErrorCode::InvalidArgument, "cannot merge distributions with different beta");
    }
    EpochDistribution out = a;
    out.excluded += b.excluded;
    out.moments.merge(b.moments);
    out.retain_raw = a.retain_raw || b.retain_raw;
    out.raw_scores.insert(out.raw_scores.end(), b.raw_scores.begin(), b.raw_scores.end());
    return out;
}

std::optional<double> excess_kurtosis(const CentralMoments& moments, double variance_floor)
{
    const double m2 = moments.moment(2);
    if (moments.count() < 2 || m2 < variance_floor) {
        return std::nullopt;
    }
    return moments.moment(4) / (m2 * m2) - 3.0;
}

double finalize_gwa(const EpochDistribution& dist, double beta, std::size_t min_samples)
{
    if (dist.count() < min_samples || dist.count() == 0) {
        throw Error(ErrorCode::TooFewSamples, std::to_string(dist.count()) + " defined scores, need " +
                                                  std::to_string(min_samples));
    }
    const double m1 = dist.moments.mean();
    const auto kurt = excess_kurtosis(dist.moments);
    if (!kurt) {
        return m1 / beta;
    }
    const double denominator = *kurt + beta;
    if (!(denominator > 1e-6)) {
        throw Error(ErrorCode::Unstable,
                    "kurtosis + beta = " + std::to_string(denominator) + " <= 1e-6");
    }
    return m1 / denominator;
}

EpochSummary summarize(const EpochDistribution& dist, const GwaOptions& options)
{
    EpochSummary s;
    s.epoch = dist.epoch;
    s.count = dist.count();
    s.excluded = dist.excluded;
    s.beta = options.beta;
    s.m1 = dist.moments.moment(1);
    s.m2 = dist.moments.moment(2);
    s.m3 = dist.moments.moment(3);
    s.m4 = dist.moments.moment(4);
    if (s.count == 0) {
        s.flags |= kFlagTooFewSamples;
        return s;
    }
    if (s.count < options.min_samples) {
        s.flags |= kFlagTooFewSamples;
    }
    s.excess_kurtosis = excess_kurtosis(dist.moments, options.variance_floor);
    if (!s.excess_kurtosis) {
        s.flags |= kFlagDegenerate;
        s.gwa = s.m1 / options.beta;
        return s;
    }
    if (std::abs(*s.excess_kurtosis + 1.2) < options.bimodal_band &&
        s.m2 >= options.bimodal_min_variance) {
        s.flags |= kFlagBimodal;
    }
    const double denominator = *s.excess_kurtosis + options.beta;
    if (!(denominator > options.denominator_floor)) {
        s.flags |= kFlagUnstable;
        return s;
    }
    s.gwa = s.m1 / denominator;
    return s;
}

namespace {

nlohmann::json optional_number(const std::optional<double>& v)
{
    return v && std::isfinite(*v) ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::optional<double> read_optional(const nlohmann::json& j, const char* key)
{
    if (!j.contains(key) || j.at(key).is_null()) {
        return std::nullopt;
    }
    return j.at(key).get<double>();
}

} // namespace

nlohmann::json to_json(const EpochSummary& s)
{
    nlohmann::json j;
    j["epoch"] = s.epoch;
    j["count"] = s.count;
    j["excluded"] = s.excluded;
    j["m1"] = s.m1;
    j["m2"] = s.m2;
    j["m3"] = s.m3;
    j["m4"] = s.m4;
    j["excess_kurtosis"] = optional_number(s.excess_kurtosis);
    j["gwa"] = optional_number(s.gwa);
    j["beta"] = s.beta;
    j["flags"] = flag_names(s.flags);
    return j;
}

EpochSummary epoch_summary_from_json(const nlohmann::json& j)
{
    try {
        EpochSummary s;
        s.epoch = j.at("epoch").get<std::uint32_t>();
        s.count = j.at("count").get<std::uint64_t>();
        s.excluded = j.at("excluded").get<std::uint64_t>();
        s.m1 = j.at("m1").get<double>();
        s.m2 = j.at("m2").get<double>();
        s.m3 = j.at("m3").get<double>();
        s.m4 = j.at("m4").get<double>();
        s.excess_kurtosis = read_optional(j, "excess_kurtosis");
        s.gwa = read_optional(j, "gwa");
        s.beta = j.value("beta", 1.2);
        s.flags = flags_from_names(j.value("flags", std::vector<std::string>{}));
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("malformed epoch summary: ") + e.what());
    }
}

} // namespace gwa
