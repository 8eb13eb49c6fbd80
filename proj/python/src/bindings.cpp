#include "gwa/alignment.hpp"
#include "gwa/controller.hpp"
#include "gwa/error.hpp"
#include "gwa/harness/config.hpp"
#include "gwa/harness/run_files.hpp"
#include "gwa/ingest.hpp"
#include "gwa/moments.hpp"
#include "gwa/projection.hpp"
#include "gwa/trace.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <fstream>
#include <sstream>

namespace py = pybind11;
using namespace gwa;

namespace {

using farray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using darray = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<float> to_vec(const farray& a)
{
    return {a.data(), a.data() + a.size()};
}

HeadSnapshot make_head(const farray& weights, const std::optional<farray>& bias)
{
    if (weights.ndim() != 2) {
        throw Error(ErrorCode::DimensionMismatch, "weights must be a C x D array");
    }
    std::optional<std::vector<float>> b;
    if (bias) {
        b = to_vec(*bias);
    }
    return HeadSnapshot::make(static_cast<std::size_t>(weights.shape(0)),
                              static_cast<std::size_t>(weights.shape(1)), to_vec(weights), b);
}

SampleRecord make_record(const farray& latent, const farray& probs, std::uint32_t label)
{
    SampleRecord r;
    r.latent = to_vec(latent);
    r.probs = to_vec(probs);
    r.label = label;
    return r;
}

// JSON crosses the boundary as text; the Python side decodes it.
std::string dump(const nlohmann::json& j) { return j.dump(); }

} // namespace

PYBIND11_MODULE(_core, m)
{
    m.doc() = "Gradient-weight alignment engine";

    static py::exception<Error> py_error(m, "GwaError", PyExc_RuntimeError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) {
                std::rethrow_exception(p);
            }
        } catch (const Error& e) {
            py_error(e.what());
        }
    });

    m.def(
        "alignment",
        [](const farray& latent, const farray& probs, std::uint32_t label, const farray& weights,
           const std::optional<farray>& bias, bool include_bias) {
            AlignmentOptions o;
            o.include_bias = include_bias;
            const auto s = alignment(make_record(latent, probs, label), make_head(weights, bias), o);
            return py::make_tuple(s.gamma ? py::cast(*s.gamma) : py::none(), s.grad_norm);
        },
        py::arg("latent"), py::arg("probs"), py::arg("label"), py::arg("weights"),
        py::arg("bias") = py::none(), py::arg("include_bias") = false,
        "(gamma or None, grad_norm) for one sample against a C x D head");

    m.def(
        "head_gradient",
        [](const farray& latent, const farray& probs, std::uint32_t label, const farray& weights) {
            const auto head = make_head(weights, std::nullopt);
            const auto g = head_gradient(make_record(latent, probs, label), head);
            return py::make_tuple(g.residual, g.grad_norm);
        },
        py::arg("latent"), py::arg("probs"), py::arg("label"), py::arg("weights"));

    m.def(
        "pairwise_alignment",
        [](const farray& latent_a, const farray& probs_a, std::uint32_t label_a, const farray& latent_b,
           const farray& probs_b, std::uint32_t label_b) {
            return pairwise_alignment(make_record(latent_a, probs_a, label_a),
                                      make_record(latent_b, probs_b, label_b));
        },
        py::arg("latent_a"), py::arg("probs_a"), py::arg("label_a"), py::arg("latent_b"),
        py::arg("probs_b"), py::arg("label_b"));

    py::class_<CentralMoments>(m, "CentralMoments")
        .def(py::init<>())
        .def("add", &CentralMoments::add)
        .def("extend",
             [](CentralMoments& c, const darray& xs) {
                 for (py::ssize_t i = 0; i < xs.size(); ++i) {
                     c.add(xs.data()[i]);
                 }
             })
        .def("merge", &CentralMoments::merge)
        .def_property_readonly("count", &CentralMoments::count)
        .def_property_readonly("mean", &CentralMoments::mean)
        .def("moment", &CentralMoments::moment)
        .def_static("two_pass", [](const darray& xs) {
            return CentralMoments::two_pass({xs.data(), static_cast<std::size_t>(xs.size())});
        });

    m.def(
        "summarize_scores",
        [](const std::vector<std::optional<double>>& gammas, std::uint32_t epoch, double beta,
           std::size_t min_samples) {
            EpochDistribution dist;
            dist.epoch = epoch;
            dist.beta = beta;
            AlignmentScore s;
            s.epoch = epoch;
            for (std::size_t i = 0; i < gammas.size(); ++i) {
                s.sample_id = i;
                s.gamma = gammas[i];
                accumulate(dist, s);
            }
            GwaOptions o;
            o.beta = beta;
            o.min_samples = min_samples;
            return dump(to_json(summarize(dist, o)));
        },
        py::arg("gammas"), py::arg("epoch") = 0, py::arg("beta") = 1.2, py::arg("min_samples") = 30,
        "epoch summary (JSON text) for a list of gammas; None marks an undefined score");

    m.def(
        "select_scratch",
        [](const std::vector<std::optional<double>>& gwa, double warmup) {
            GwaSeries series;
            for (std::size_t e = 0; e < gwa.size(); ++e) {
                EpochSummary s;
                s.epoch = static_cast<std::uint32_t>(e);
                s.count = 30;
                s.gwa = gwa[e];
                if (!gwa[e]) {
                    s.flags = kFlagUnstable;
                }
                series.epochs.push_back(s);
            }
            return dump(to_json(select_scratch(series, warmup)));
        },
        py::arg("gwa"), py::arg("warmup") = 0.10);

    py::class_<JlProjection>(m, "JlProjection")
        .def(py::init<std::size_t, std::size_t, std::uint64_t>(), py::arg("source_dim"),
             py::arg("target_dim") = 192, py::arg("seed") = 0)
        .def_property_readonly("source_dim", &JlProjection::source_dim)
        .def_property_readonly("target_dim", &JlProjection::target_dim)
        .def("matrix",
             [](const JlProjection& p) {
                 py::array_t<double> out({p.target_dim(), p.source_dim()});
                 std::copy(p.matrix().begin(), p.matrix().end(), out.mutable_data());
                 return out;
             })
        .def("apply", [](const JlProjection& p, const darray& z) {
            return p.apply(std::span<const double>(z.data(), static_cast<std::size_t>(z.size())));
        });

    m.def(
        "ingest",
        [](const std::string& path, bool include_bias, std::optional<std::size_t> projection_dim,
           std::uint64_t projection_seed, bool retain_scores) {
            std::ifstream in(path, std::ios::binary);
            if (!in) {
                throw Error(ErrorCode::IoError, "cannot open trace '" + path + "'");
            }
            IngestOptions o;
            o.alignment.include_bias = include_bias;
            o.retain_scores = retain_scores;
            if (projection_dim) {
                o.projection.enabled = true;
                o.projection.dim = *projection_dim;
                o.projection.seed = projection_seed;
            }
            const auto r = ingest_stream(in, o);
            nlohmann::json j;
            j["samples"] = r.samples;
            j["steps"] = r.steps;
            j["header"] = {{"dim", r.header.dim},
                           {"classes", r.header.classes},
                           {"dataset_size", r.header.dataset_size},
                           {"batch_size", r.header.batch_size},
                           {"steps_per_epoch", r.header.steps_per_epoch},
                           {"flags", r.header.flags}};
            j["epochs"] = nlohmann::json::array();
            for (const auto& e : r.series.epochs) {
                j["epochs"].push_back(to_json(e));
            }
            if (retain_scores) {
                auto& rows = j["scores"] = nlohmann::json::array();
                for (const auto& s : r.scores) {
                    rows.push_back({s.sample_id, s.epoch, s.step,
                                    s.gamma ? nlohmann::json(*s.gamma) : nlohmann::json(nullptr),
                                    s.grad_norm});
                }
            }
            return dump(j);
        },
        py::arg("path"), py::arg("include_bias") = false, py::arg("projection_dim") = py::none(),
        py::arg("projection_seed") = 0, py::arg("retain_scores") = false);

    m.def(
        "read_trace",
        [](const std::string& path, bool convert_logits) {
            std::ifstream in(path, std::ios::binary);
            if (!in) {
                throw Error(ErrorCode::IoError, "cannot open trace '" + path + "'");
            }
            const auto trace = read_trace(in, {convert_logits});
            const auto& h = trace.header;
            py::dict header;
            header["version"] = h.version;
            header["dim"] = h.dim;
            header["classes"] = h.classes;
            header["dataset_size"] = h.dataset_size;
            header["batch_size"] = h.batch_size;
            header["steps_per_epoch"] = h.steps_per_epoch;
            header["flags"] = h.flags;
            const auto d = static_cast<py::ssize_t>(h.dim);
            const auto c = static_cast<py::ssize_t>(h.classes);
            py::list steps;
            for (const auto& r : trace.steps) {
                const auto n = static_cast<py::ssize_t>(r.batch.size());
                py::dict step;
                step["epoch"] = r.epoch;
                step["step"] = r.step;
                step["weights_reused"] = r.weights_reused;
                step["weight_hash"] = r.head->weight_hash;
                step["weights"] = farray({c, d}, r.head->weights.data());
                step["bias"] = r.head->bias ? py::object(farray(std::vector<py::ssize_t>{c}, r.head->bias->data())) : py::none();
                step["sample_ids"] = py::array_t<std::uint64_t>(std::vector<py::ssize_t>{n}, r.batch.sample_ids.data());
                step["latents"] = farray({n, d}, r.batch.latents.data());
                step["probs"] = farray({n, c}, r.batch.probs.data());
                step["labels"] = py::array_t<std::uint32_t>(std::vector<py::ssize_t>{n}, r.batch.labels.data());
                steps.append(step);
            }
            py::dict out;
            out["header"] = header;
            out["steps"] = steps;
            return out;
        },
        py::arg("path"), py::arg("convert_logits") = true,
        "parse a trace into a header dict and a list of step dicts with numpy arrays");

    m.def(
        "train",
        [](const std::string& config_text, const std::string& out_dir) {
            const auto config = harness::run_config_from_text(config_text);
            py::gil_scoped_release release;
            const auto result = harness::run_training(config, out_dir);
            return dump(harness::to_json(result.report));
        },
        py::arg("config_text"), py::arg("out_dir"),
        "train from flat config text into a run directory; returns the report (JSON text)");

    m.attr("TRACE_HEADER_SIZE") = kTraceHeaderSize;
    m.attr("ALIGNMENT_ROW_SIZE") = kAlignmentRowSize;
}
