#include "psfdeconv/error.hpp"
#include "psfdeconv/estimator.hpp"
#include "psfdeconv/onnx_graph.hpp"

#include <cmath>
#include <string>

namespace psfdeconv::estimator {

namespace {

constexpr int kFloat32 = 1;

std::string dims_str(const std::vector<std::int64_t>& d) {
    std::string s;
    for (std::size_t k = 0; k < d.size(); ++k) {
        if (k) s += 'x';
        s += d[k] < 0 ? std::string("?") : std::to_string(d[k]);
    }
    return s.empty() ? "scalar" : s;
}

class OnnxEstimator final : public PatchEstimator {
public:
    OnnxEstimator(onnx::Graph graph, const ExternalModelOptions& options)
        : graph_(std::move(graph)), options_(options) {}

    int n_params() const override { return options_.n_params; }
    int patch_size() const override { return options_.patch_size; }
    double coeff_min() const override { return options_.coeff_min; }
    double coeff_max() const override { return options_.coeff_max; }

    onnx::Tensor forward(const Image& patch) const {
        onnx::Tensor in;
        const std::int64_t p = options_.patch_size;
        in.shape = {1, 1, p, p};
        in.data.assign(patch.pixels().begin(), patch.pixels().end());
        return graph_.run(in);
    }

protected:
    optics::CoeffVector regress(const Image& patch) const override {
        const onnx::Tensor out = forward(patch);
        if (out.data.size() != static_cast<std::size_t>(options_.n_params)) {
            throw BackendError("model produced " + std::to_string(out.data.size()) + " values, expected " +
                               std::to_string(options_.n_params));
        }
        std::vector<double> a(out.data.begin(), out.data.end());
        for (double v : a) {
            if (!std::isfinite(v)) throw BackendError("model produced a non-finite coefficient");
        }
        return optics::CoeffVector(std::move(a));
    }

private:
    onnx::Graph graph_;
    ExternalModelOptions options_;
};

}  // namespace

std::unique_ptr<PatchEstimator> load_external_model(const std::filesystem::path& path,
                                                    const ExternalModelOptions& options) {
    if (options.n_params < 1 || options.patch_size < 1 || !(options.coeff_max >= options.coeff_min)) {
        throw DomainError("invalid external model options");
    }
    onnx::Graph graph = onnx::Graph::load(path);
    const std::string where = " in '" + path.string() + "'";
    if (graph.inputs().size() != 1) {
        throw ModelLoadError("model must have exactly one input, found " +
                             std::to_string(graph.inputs().size()) + where);
    }
    if (graph.outputs().size() != 1) {
        throw ModelLoadError("model must have exactly one output, found " +
                             std::to_string(graph.outputs().size()) + where);
    }
    const auto& in = graph.inputs()[0];
    const auto& out = graph.outputs()[0];
    if (in.name != "patch") throw ModelLoadError("input is named '" + in.name + "', expected 'patch'" + where);
    if (out.name != "coeffs") throw ModelLoadError("output is named '" + out.name + "', expected 'coeffs'" + where);
    if (in.elem_type != kFloat32) throw ModelLoadError("input 'patch' must be float32" + where);
    if (out.elem_type != kFloat32) throw ModelLoadError("output 'coeffs' must be float32" + where);
    const std::int64_t p = options.patch_size;
    const std::vector<std::int64_t> want_in{1, 1, p, p};
    bool in_ok = in.dims.size() == 4;
    for (std::size_t k = 0; in_ok && k < 4; ++k) {
        // A symbolic batch axis is accepted; everything else must be static.
        in_ok = in.dims[k] == want_in[k] || (k == 0 && in.dims[k] < 0);
    }
    if (!in_ok) {
        throw ModelLoadError("input 'patch' has shape " + dims_str(in.dims) + ", expected " +
                             dims_str(want_in) + where);
    }
    auto est = std::make_unique<OnnxEstimator>(std::move(graph), options);
    onnx::Tensor probe;
    try {
        probe = est->forward(Image(options.patch_size, options.patch_size));
    } catch (const ModelLoadError& e) {
        throw ModelLoadError(std::string("dry run failed: ") + e.what() + where);
    }
    const std::vector<std::int64_t> want_out{1, options.n_params};
    if (probe.shape != want_out) {
        throw ModelLoadError("output 'coeffs' has shape " + dims_str(probe.shape) + ", expected " +
                             dims_str(want_out) + where);
    }
    return est;
}

}  // namespace psfdeconv::estimator
