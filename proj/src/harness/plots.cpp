#include "gwa/harness/plots.hpp"

#include "gwa/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace gwa::harness {

std::uint64_t Histogram::total() const noexcept
{
    std::uint64_t t = 0;
    for (auto c : counts) {
        t += c;
    }
    return t;
}

Histogram histogram(std::span<const double> values, std::size_t bins, double lo, double hi)
{
    if (bins == 0 || !(hi > lo)) {
        throw Error(ErrorCode::InvalidArgument, "histogram needs bins > 0 and hi > lo");
    }
    Histogram h;
    h.lo = lo;
    h.hi = hi;
    h.counts.assign(bins, 0);
    const double width = (hi - lo) / static_cast<double>(bins);
    for (double v : values) {
        if (!std::isfinite(v)) {
            continue;
        }
        auto bin = static_cast<std::ptrdiff_t>(std::floor((v - lo) / width));
        bin = std::clamp<std::ptrdiff_t>(bin, 0, static_cast<std::ptrdiff_t>(bins) - 1);
        ++h.counts[static_cast<std::size_t>(bin)];
    }
    return h;
}

std::vector<std::optional<double>> min_max_normalize(const std::vector<std::optional<double>>& series)
{
    double lo = INFINITY;
    double hi = -INFINITY;
    for (const auto& v : series) {
        if (v) {
            lo = std::min(lo, *v);
            hi = std::max(hi, *v);
        }
    }
    std::vector<std::optional<double>> out;
    out.reserve(series.size());
    for (const auto& v : series) {
        if (!v) {
            out.emplace_back(std::nullopt);
        } else if (hi > lo) {
            out.emplace_back((*v - lo) / (hi - lo));
        } else {
            out.emplace_back(0.5);
        }
    }
    return out;
}

namespace {

std::string fmt(double v, int precision = 6)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", precision, v);
    return buf;
}

std::string fmt_opt(const std::optional<double>& v)
{
    return v ? fmt(*v, 9) : std::string();
}

void write_file(const std::filesystem::path& path, const std::string& content,
                std::vector<std::filesystem::path>& written)
{
    std::ofstream out(path, std::ios::binary);
    out << content;
    if (!out) {
        throw Error(ErrorCode::IoError, "cannot write '" + path.string() + "'");
    }
    written.push_back(path);
}

constexpr double kWidth = 720.0;
constexpr double kHeight = 360.0;
constexpr double kMargin = 48.0;

std::string svg_open(const std::string& title)
{
    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(kWidth, 0) << "\" height=\""
      << fmt(kHeight, 0) << "\" viewBox=\"0 0 " << fmt(kWidth, 0) << ' ' << fmt(kHeight, 0)
      << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << fmt(kMargin, 0) << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">"
      << title << "</text>\n"
      << "<rect x=\"" << fmt(kMargin, 0) << "\" y=\"" << fmt(kMargin, 0) << "\" width=\""
      << fmt(kWidth - 2 * kMargin, 0) << "\" height=\"" << fmt(kHeight - 2 * kMargin, 0)
      << "\" fill=\"none\" stroke=\"#888\"/>\n";
    return s.str();
}

std::string series_svg(const RunReport& report)
{
    struct Line {
        const char* name;
        const char* colour;
        std::vector<std::optional<double>> values;
    };
    std::vector<Line> lines = {{"val accuracy", "#6a3d9a", {}},
                               {"train accuracy", "#1f78b4", {}},
                               {"GWA", "#e6ab02", {}},
                               {"prediction change", "#b2182b", {}}};
    for (const auto& e : report.epochs) {
        lines[0].values.emplace_back(e.val_accuracy);
        lines[1].values.emplace_back(e.train_accuracy);
        lines[2].values.push_back(e.gwa);
        lines[3].values.push_back(e.labelwave_change);
    }
    const std::size_t n = report.epochs.size();
    const double plot_w = kWidth - 2 * kMargin;
    const double plot_h = kHeight - 2 * kMargin;
    auto x_of = [&](std::size_t i) {
        return kMargin + (n > 1 ? plot_w * static_cast<double>(i) / static_cast<double>(n - 1) : plot_w / 2);
    };
    auto y_of = [&](double v) { return kMargin + plot_h * (1.0 - v); };

    std::ostringstream s;
    s << svg_open("Normalized training series");
    for (const auto& d : report.decisions) {
        if (d.selected_index < n) {
            s << "<line x1=\"" << fmt(x_of(d.selected_index), 2) << "\" y1=\"" << fmt(kMargin, 0)
              << "\" x2=\"" << fmt(x_of(d.selected_index), 2) << "\" y2=\"" << fmt(kHeight - kMargin, 0)
              << "\" stroke=\"#bbb\" stroke-dasharray=\"4 3\"><title>" << to_string(d.criterion)
              << "</title></line>\n";
        }
    }
    double legend_y = kMargin + 14;
    for (const auto& line : lines) {
        const auto norm = min_max_normalize(line.values);
        std::string points;
        for (std::size_t i = 0; i < norm.size(); ++i) {
            if (norm[i]) {
                points += fmt(x_of(i), 2) + "," + fmt(y_of(*norm[i]), 2) + " ";
            }
        }
        if (!points.empty()) {
            points.pop_back();
            s << "<polyline fill=\"none\" stroke=\"" << line.colour << "\" stroke-width=\"1.5\" points=\""
              << points << "\"/>\n";
        }
        s << "<text x=\"" << fmt(kWidth - kMargin - 130, 0) << "\" y=\"" << fmt(legend_y, 0)
          << "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"" << line.colour << "\">"
          << line.name << "</text>\n";
        legend_y += 14;
    }
    s << "</svg>\n";
    return s.str();
}

std::string histogram_svg(const std::string& title, const std::vector<Histogram>& groups,
                          const std::vector<std::string>& names)
{
    static const char* colours[] = {"#1f78b4", "#e31a1c", "#33a02c"};
    std::uint64_t peak = 1;
    for (const auto& h : groups) {
        for (auto c : h.counts) {
            peak = std::max(peak, c);
        }
    }
    const double plot_w = kWidth - 2 * kMargin;
    const double plot_h = kHeight - 2 * kMargin;
    std::ostringstream s;
    s << svg_open(title);
    for (std::size_t g = 0; g < groups.size(); ++g) {
        const auto& h = groups[g];
        const double bar_w = plot_w / static_cast<double>(h.counts.size());
        for (std::size_t b = 0; b < h.counts.size(); ++b) {
            if (h.counts[b] == 0) {
                continue;
            }
            const double bh = plot_h * static_cast<double>(h.counts[b]) / static_cast<double>(peak);
            s << "<rect x=\"" << fmt(kMargin + bar_w * static_cast<double>(b), 2) << "\" y=\""
              << fmt(kHeight - kMargin - bh, 2) << "\" width=\"" << fmt(bar_w, 2) << "\" height=\""
              << fmt(bh, 2) << "\" fill=\"" << colours[g % 3] << "\" fill-opacity=\"0.5\"/>\n";
        }
        s << "<text x=\"" << fmt(kMargin + 8, 0) << "\" y=\"" << fmt(kMargin + 14 + 14 * static_cast<double>(g), 0)
          << "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"" << colours[g % 3] << "\">"
          << names[g] << "</text>\n";
    }
    s << "<text x=\"" << fmt(kMargin, 0) << "\" y=\"" << fmt(kHeight - kMargin + 16, 0)
      << "\" font-family=\"sans-serif\" font-size=\"11\">-1</text>\n"
      << "<text x=\"" << fmt(kWidth - kMargin - 8, 0) << "\" y=\"" << fmt(kHeight - kMargin + 16, 0)
      << "\" font-family=\"sans-serif\" font-size=\"11\">1</text>\n"
      << "</svg>\n";
    return s.str();
}

std::string histogram_csv(const std::vector<Histogram>& groups, const std::vector<std::string>& names)
{
    std::ostringstream s;
    s << "bin_lo,bin_hi";
    for (const auto& n : names) {
        s << ',' << n;
    }
    s << '\n';
    const auto& first = groups.front();
    const double width = (first.hi - first.lo) / static_cast<double>(first.counts.size());
    for (std::size_t b = 0; b < first.counts.size(); ++b) {
        s << fmt(first.lo + width * static_cast<double>(b)) << ','
          << fmt(first.lo + width * static_cast<double>(b + 1));
        for (const auto& h : groups) {
            s << ',' << h.counts[b];
        }
        s << '\n';
    }
    return s.str();
}

} // namespace

std::string series_csv(const RunReport& report)
{
    std::ostringstream s;
    s << "epoch,train_loss,train_accuracy,val_accuracy,test_accuracy,gwa,m1,excess_kurtosis,labelwave_change\n";
    for (const auto& e : report.epochs) {
        s << e.epoch << ',' << fmt(e.train_loss, 9) << ',' << fmt(e.train_accuracy, 9) << ','
          << fmt(e.val_accuracy, 9) << ',' << fmt(e.test_accuracy, 9) << ',' << fmt_opt(e.gwa) << ','
          << fmt(e.m1, 9) << ',' << fmt_opt(e.excess_kurtosis) << ',' << fmt_opt(e.labelwave_change)
          << '\n';
    }
    return s.str();
}

std::vector<std::filesystem::path> emit_plots(const RunReport& report,
                                              std::span<const AlignmentScore> scores,
                                              const std::vector<std::uint8_t>* flip_mask,
                                              const std::filesystem::path& out_dir)
{
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) {
        throw Error(ErrorCode::IoError, "cannot create '" + out_dir.string() + "': " + ec.message());
    }
    std::vector<std::filesystem::path> written;
    write_file(out_dir / "series.csv", series_csv(report), written);
    if (report.epochs.empty()) {
        return written;
    }
    write_file(out_dir / "series.svg", series_svg(report), written);

    std::set<std::uint32_t> epochs = {report.epochs.front().epoch, report.epochs.back().epoch};
    for (const auto& d : report.decisions) {
        if (d.criterion == StopCriterion::GwaScratch || d.criterion == StopCriterion::GwaFinetune) {
            epochs.insert(d.selected_epoch);
        }
    }
    for (std::uint32_t epoch : epochs) {
        std::vector<double> all;
        std::vector<double> clean;
        std::vector<double> flipped;
        for (const auto& s : scores) {
            if (s.epoch != epoch || !s.gamma) {
                continue;
            }
            all.push_back(*s.gamma);
            if (flip_mask && s.sample_id < flip_mask->size()) {
                ((*flip_mask)[s.sample_id] ? flipped : clean).push_back(*s.gamma);
            }
        }
        if (all.empty()) {
            continue;
        }
        const std::string stem = "hist_epoch_" + std::to_string(epoch);
        std::vector<Histogram> groups = {histogram(all)};
        std::vector<std::string> names = {"all"};
        if (flip_mask && !flipped.empty()) {
            groups = {histogram(clean), histogram(flipped)};
            names = {"clean", "mislabeled"};
        }
        write_file(out_dir / (stem + ".csv"), histogram_csv(groups, names), written);
        write_file(out_dir / (stem + ".svg"),
                   histogram_svg("Alignment distribution, epoch " + std::to_string(epoch), groups, names),
                   written);
    }
    return written;
}

} // namespace gwa::harness
