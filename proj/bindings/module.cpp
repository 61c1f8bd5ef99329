#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "flexlora/federation.hpp"
#include "flexlora/config.hpp"
#include "flexlora/presets.hpp"

namespace py = pybind11;
using namespace flexlora;

namespace {

Matrix to_matrix(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) {
        throw InvalidMatrix("expected a 2-D array");
    }
    const int rows = static_cast<int>(a.shape(0));
    const int cols = static_cast<int>(a.shape(1));
    std::vector<double> data(a.data(), a.data() + static_cast<std::size_t>(rows) * cols);
    return Matrix(rows, cols, std::move(data));
}

py::array_t<double> to_array(const Matrix& m) {
    py::array_t<double> out({m.rows(), m.cols()});
    std::copy(m.data().begin(), m.data().end(), out.mutable_data());
    return out;
}

Config config_from_dict(const py::dict& d) {
    Config cfg;
    for (const auto& item : d) {
        cfg.set(py::str(item.first), py::str(item.second));
    }
    return cfg;
}

}  // namespace

PYBIND11_MODULE(_flexlora, m) {
    m.doc() = "federated low-rank adapter aggregation (FlexLoRA) core";

    py::register_exception<Error>(m, "FlexloraError");

    m.def(
        "svd",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& w) {
            const SvdFactors f = svd(to_matrix(w));
            return py::make_tuple(to_array(f.u), py::cast(f.sigma), to_array(f.v));
        },
        py::arg("w"), "one-sided Jacobi SVD: returns (u, sigma, v) with w = u @ diag(sigma) @ v.T");

    m.def(
        "truncate",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& w, int r) {
            return to_array(truncate(svd(to_matrix(w)), r));
        },
        py::arg("w"), py::arg("r"), "best rank-r approximation of w");

    m.def(
        "truncation_error",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& w, int r) {
            return truncation_error(svd(to_matrix(w)), r);
        },
        py::arg("w"), py::arg("r"));

    m.def(
        "compose",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& up,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& down, double s) {
            return to_array(compose(LoraAdapter(to_matrix(up), to_matrix(down), s)));
        },
        py::arg("up"), py::arg("down"), py::arg("scaling") = 1.0,
        "materialize the adapter delta scaling * up @ down");

    m.def(
        "decompose",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& w, int r, double s) {
            const LoraAdapter a = decompose(to_matrix(w), r, s);
            return py::make_tuple(to_array(a.up), to_array(a.down));
        },
        py::arg("w"), py::arg("r"), py::arg("scaling") = 1.0,
        "rank-budgeted adapter (up, down) whose composition is the rank-r truncation of w");

    m.def(
        "aggregate_flexlora",
        [](const std::vector<py::tuple>& contribs) {
            std::vector<Contribution> cs;
            for (const py::tuple& t : contribs) {
                Contribution c;
                c.client_id = t[0].cast<int>();
                for (const py::tuple& layer : t[1].cast<std::vector<py::tuple>>()) {
                    c.adapters.emplace_back(to_matrix(layer[0].cast<py::array_t<double>>()),
                                            to_matrix(layer[1].cast<py::array_t<double>>()),
                                            layer[2].cast<double>());
                }
                c.sample_count = t[2].cast<long long>();
                cs.push_back(std::move(c));
            }
            const GlobalDelta g = aggregate_flexlora(cs);
            std::vector<py::array_t<double>> out;
            for (const Matrix& w : g.layers) out.push_back(to_array(w));
            return out;
        },
        py::arg("contributions"),
        "full-weight average over contributions [(client_id, [(up, down, scaling)...], n)]");

    m.def(
        "run_experiment",
        [](const py::dict& config) {
            const Config cfg = config_from_dict(config);
            WorldConfig wcfg = world_config_from(cfg);
            const World world = gen_world(wcfg);
            const FedConfig fcfg = fed_config_from(cfg, wcfg);
            const ExperimentResult result = run_experiment(world, fcfg);
            py::list rounds;
            for (const RoundReport& r : result.rounds) {
                py::dict row;
                row["round"] = r.round;
                row["train_loss"] = r.train_loss;
                row["val_loss"] = r.val_loss;
                row["zeroshot_loss"] = r.zeroshot_loss;
                row["cost_per_round"] = r.cost_per_round;
                rounds.append(row);
            }
            py::dict out;
            out["rounds"] = rounds;
            out["rounds_to_threshold"] = result.rounds_to_threshold;
            out["total_cost"] = result.total_cost;
            out["final_val_loss"] = result.final_val_loss;
            out["final_zeroshot_loss"] = result.final_zeroshot_loss;
            return out;
        },
        py::arg("config"),
        "run a federated experiment from a flat {key: value} config (same keys as the CLI)");

    m.def(
        "run_sweep",
        [](const std::string& preset, const std::string& out_dir) {
            return run_sweep(preset, out_dir).dump();
        },
        py::arg("preset"), py::arg("out_dir"), "run a named experiment grid; returns summary JSON");
}
