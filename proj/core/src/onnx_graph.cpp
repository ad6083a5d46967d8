#include "psfdeconv/onnx_graph.hpp"

#include "psfdeconv/error.hpp"

#include "onnx_subset.pb.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace psfdeconv::onnx {

namespace pb = psfdeconv_onnx;

std::int64_t Tensor::numel() const noexcept {
    return std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>());
}

namespace {

using Shape = std::vector<std::int64_t>;

// Runtime value: float data, or int64 data for shape arithmetic.
struct Value {
    Shape shape;
    std::vector<float> f;
    std::vector<std::int64_t> i;
    bool is_int = false;

    std::size_t numel() const noexcept {
        return static_cast<std::size_t>(
            std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>()));
    }
};

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t k = 0; k < s.size(); ++k) os << (k ? "," : "") << s[k];
    os << ']';
    return os.str();
}

[[noreturn]] void fail(const pb::NodeProto& node, const std::string& msg) {
    const std::string id = node.name().empty() ? node.op_type() : node.op_type() + " '" + node.name() + "'";
    throw ModelLoadError("node " + id + ": " + msg);
}

Value from_tensor_proto(const pb::TensorProto& t, const std::string& context) {
    Value v;
    v.shape.assign(t.dims().begin(), t.dims().end());
    for (auto d : v.shape) {
        if (d < 0) throw ModelLoadError(context + ": tensor '" + t.name() + "' has a negative dimension");
    }
    const std::size_t n = v.numel();
    const std::string& raw = t.raw_data();
    switch (t.data_type()) {
        case pb::TensorProto::FLOAT:
            if (!raw.empty()) {
                if (raw.size() != n * 4) break;
                v.f.resize(n);
                std::memcpy(v.f.data(), raw.data(), raw.size());
            } else {
                v.f.assign(t.float_data().begin(), t.float_data().end());
            }
            if (v.f.size() != n) break;
            return v;
        case pb::TensorProto::DOUBLE:
            if (!raw.empty()) {
                if (raw.size() != n * 8) break;
                std::vector<double> d(n);
                std::memcpy(d.data(), raw.data(), raw.size());
                v.f.assign(d.begin(), d.end());
            } else {
                v.f.assign(t.double_data().begin(), t.double_data().end());
            }
            if (v.f.size() != n) break;
            return v;
        case pb::TensorProto::INT64:
            v.is_int = true;
            if (!raw.empty()) {
                if (raw.size() != n * 8) break;
                v.i.resize(n);
                std::memcpy(v.i.data(), raw.data(), raw.size());
            } else {
                v.i.assign(t.int64_data().begin(), t.int64_data().end());
            }
            if (v.i.size() != n) break;
            return v;
        case pb::TensorProto::INT32:
            v.is_int = true;
            if (!raw.empty()) {
                if (raw.size() != n * 4) break;
                std::vector<std::int32_t> d(n);
                std::memcpy(d.data(), raw.data(), raw.size());
                v.i.assign(d.begin(), d.end());
            } else {
                v.i.assign(t.int32_data().begin(), t.int32_data().end());
            }
            if (v.i.size() != n) break;
            return v;
        default:
            throw ModelLoadError(context + ": tensor '" + t.name() + "' has unsupported data type " +
                                 std::to_string(t.data_type()));
    }
    throw ModelLoadError(context + ": tensor '" + t.name() + "' payload does not match its shape " +
                         shape_str(v.shape));
}

const pb::AttributeProto* find_attr(const pb::NodeProto& node, const std::string& name) {
    for (const auto& a : node.attribute()) {
        if (a.name() == name) return &a;
    }
    return nullptr;
}

std::int64_t attr_int(const pb::NodeProto& node, const std::string& name, std::int64_t def) {
    const auto* a = find_attr(node, name);
    return a ? a->i() : def;
}

float attr_float(const pb::NodeProto& node, const std::string& name, float def) {
    const auto* a = find_attr(node, name);
    return a ? a->f() : def;
}

Shape attr_ints(const pb::NodeProto& node, const std::string& name, Shape def = {}) {
    const auto* a = find_attr(node, name);
    if (!a) return def;
    return Shape(a->ints().begin(), a->ints().end());
}

std::string attr_string(const pb::NodeProto& node, const std::string& name, const std::string& def) {
    const auto* a = find_attr(node, name);
    return a ? a->s() : def;
}

std::int64_t norm_axis(const pb::NodeProto& node, std::int64_t axis, std::size_t rank) {
    const auto r = static_cast<std::int64_t>(rank);
    if (axis < -r || axis >= r) fail(node, "axis " + std::to_string(axis) + " out of range for rank " + std::to_string(r));
    return axis < 0 ? axis + r : axis;
}

Shape strides_of(const Shape& s) {
    Shape st(s.size(), 1);
    for (std::size_t k = s.size(); k-- > 1;) st[k - 1] = st[k] * s[k];
    return st;
}

Shape broadcast_shape(const pb::NodeProto& node, const Shape& a, const Shape& b) {
    const std::size_t r = std::max(a.size(), b.size());
    Shape out(r);
    for (std::size_t k = 0; k < r; ++k) {
        const std::int64_t da = k + a.size() >= r ? a[k + a.size() - r] : 1;
        const std::int64_t db = k + b.size() >= r ? b[k + b.size() - r] : 1;
        if (da != db && da != 1 && db != 1) {
            fail(node, "cannot broadcast " + shape_str(a) + " with " + shape_str(b));
        }
        out[k] = da == 1 ? db : da;
    }
    return out;
}

// Flat source offsets of a broadcast operand for every output element.
std::vector<std::size_t> broadcast_offsets(const Shape& src, const Shape& out) {
    const std::size_t r = out.size();
    Shape padded(r, 1);
    for (std::size_t k = 0; k < src.size(); ++k) padded[r - src.size() + k] = src[k];
    const Shape sst = strides_of(padded);
    Shape ost = strides_of(out);
    std::size_t total = 1;
    for (auto d : out) total *= static_cast<std::size_t>(d);
    std::vector<std::size_t> offs(total);
    for (std::size_t flat = 0; flat < total; ++flat) {
        std::size_t rem = flat;
        std::size_t off = 0;
        for (std::size_t k = 0; k < r; ++k) {
            const std::size_t idx = rem / static_cast<std::size_t>(ost[k]);
            rem %= static_cast<std::size_t>(ost[k]);
            if (padded[k] != 1) off += idx * static_cast<std::size_t>(sst[k]);
        }
        offs[flat] = off;
    }
    return offs;
}

template <typename T, typename Op>
std::vector<T> binary(const std::vector<T>& a, const Shape& sa, const std::vector<T>& b,
                      const Shape& sb, const Shape& out, Op op) {
    const auto oa = broadcast_offsets(sa, out);
    const auto ob = broadcast_offsets(sb, out);
    std::vector<T> r(oa.size());
    for (std::size_t k = 0; k < r.size(); ++k) r[k] = op(a[oa[k]], b[ob[k]]);
    return r;
}

Value elementwise(const pb::NodeProto& node, const Value& a, const Value& b) {
    const std::string& op = node.op_type();
    Value out;
    out.shape = broadcast_shape(node, a.shape, b.shape);
    if (a.is_int && b.is_int) {
        out.is_int = true;
        if (op == "Add") out.i = binary(a.i, a.shape, b.i, b.shape, out.shape, std::plus<>());
        else if (op == "Sub") out.i = binary(a.i, a.shape, b.i, b.shape, out.shape, std::minus<>());
        else if (op == "Mul") out.i = binary(a.i, a.shape, b.i, b.shape, out.shape, std::multiplies<>());
        else {
            out.i = binary(a.i, a.shape, b.i, b.shape, out.shape, [&](std::int64_t x, std::int64_t y) {
                if (y == 0) fail(node, "integer division by zero");
                return x / y;
            });
        }
        return out;
    }
    if (a.is_int || b.is_int) fail(node, "mixed int64/float operands");
    if (op == "Add") out.f = binary(a.f, a.shape, b.f, b.shape, out.shape, std::plus<>());
    else if (op == "Sub") out.f = binary(a.f, a.shape, b.f, b.shape, out.shape, std::minus<>());
    else if (op == "Mul") out.f = binary(a.f, a.shape, b.f, b.shape, out.shape, std::multiplies<>());
    else out.f = binary(a.f, a.shape, b.f, b.shape, out.shape, std::divides<>());
    return out;
}

const Value& need_float(const pb::NodeProto& node, const Value& v) {
    if (v.is_int) fail(node, "expected a float tensor");
    return v;
}

Shape int_values(const pb::NodeProto& node, const Value& v) {
    if (!v.is_int) fail(node, "expected an int64 tensor");
    return v.i;
}

struct SpatialGeometry {
    std::int64_t kh, kw, sh, sw, dh, dw, pt, pl, pb, pr;
    std::int64_t oh, ow;
};

SpatialGeometry spatial(const pb::NodeProto& node, const Shape& x, std::int64_t kh, std::int64_t kw,
                        bool ceil_mode) {
    SpatialGeometry g{};
    g.kh = kh;
    g.kw = kw;
    const Shape strides = attr_ints(node, "strides", {1, 1});
    const Shape dil = attr_ints(node, "dilations", {1, 1});
    Shape pads = attr_ints(node, "pads", {0, 0, 0, 0});
    if (strides.size() != 2 || dil.size() != 2 || pads.size() != 4) {
        fail(node, "only 2D spatial attributes are supported");
    }
    g.sh = strides[0];
    g.sw = strides[1];
    g.dh = dil[0];
    g.dw = dil[1];
    if (g.sh < 1 || g.sw < 1 || g.dh < 1 || g.dw < 1) fail(node, "strides and dilations must be positive");
    const std::int64_t H = x[2];
    const std::int64_t W = x[3];
    const std::int64_t eh = (kh - 1) * g.dh + 1;
    const std::int64_t ew = (kw - 1) * g.dw + 1;
    const std::string auto_pad = attr_string(node, "auto_pad", "NOTSET");
    if (auto_pad == "SAME_UPPER" || auto_pad == "SAME_LOWER") {
        const std::int64_t oh = (H + g.sh - 1) / g.sh;
        const std::int64_t ow = (W + g.sw - 1) / g.sw;
        const std::int64_t ph = std::max<std::int64_t>(0, (oh - 1) * g.sh + eh - H);
        const std::int64_t pw = std::max<std::int64_t>(0, (ow - 1) * g.sw + ew - W);
        const bool upper = auto_pad == "SAME_UPPER";
        pads = {upper ? ph / 2 : ph - ph / 2, upper ? pw / 2 : pw - pw / 2,
                upper ? ph - ph / 2 : ph / 2, upper ? pw - pw / 2 : pw / 2};
    } else if (auto_pad == "VALID") {
        pads = {0, 0, 0, 0};
    } else if (auto_pad != "NOTSET") {
        fail(node, "unsupported auto_pad '" + auto_pad + "'");
    }
    g.pt = pads[0];
    g.pl = pads[1];
    g.pb = pads[2];
    g.pr = pads[3];
    const std::int64_t nh = H + g.pt + g.pb - eh;
    const std::int64_t nw = W + g.pl + g.pr - ew;
    if (nh < 0 || nw < 0) fail(node, "kernel larger than padded input " + shape_str(x));
    g.oh = (ceil_mode ? (nh + g.sh - 1) / g.sh : nh / g.sh) + 1;
    g.ow = (ceil_mode ? (nw + g.sw - 1) / g.sw : nw / g.sw) + 1;
    return g;
}

Value conv(const pb::NodeProto& node, const Value& x, const Value& w, const Value* b) {
    need_float(node, x);
    need_float(node, w);
    if (x.shape.size() != 4 || w.shape.size() != 4) fail(node, "only 2D convolution (NCHW) is supported");
    const std::int64_t group = attr_int(node, "group", 1);
    const std::int64_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
    const std::int64_t M = w.shape[0], Cg = w.shape[1];
    if (group < 1 || C != Cg * group || M % group != 0) {
        fail(node, "channel mismatch: input " + shape_str(x.shape) + ", weight " + shape_str(w.shape));
    }
    const Shape ks = attr_ints(node, "kernel_shape", {w.shape[2], w.shape[3]});
    if (ks.size() != 2 || ks[0] != w.shape[2] || ks[1] != w.shape[3]) fail(node, "kernel_shape disagrees with weights");
    if (b && (b->is_int || b->numel() != static_cast<std::size_t>(M))) fail(node, "bias length mismatch");
    const auto g = spatial(node, x.shape, ks[0], ks[1], false);
    Value out;
    out.shape = {N, M, g.oh, g.ow};
    out.f.assign(out.numel(), 0.0f);
    const std::int64_t Mg = M / group;
    for (std::int64_t n = 0; n < N; ++n) {
        for (std::int64_t m = 0; m < M; ++m) {
            const std::int64_t grp = m / Mg;
            float* op = &out.f[static_cast<std::size_t>(((n * M + m) * g.oh) * g.ow)];
            const float bias = b ? b->f[static_cast<std::size_t>(m)] : 0.0f;
            for (std::int64_t k = 0; k < g.oh * g.ow; ++k) op[k] = bias;
            for (std::int64_t c = 0; c < Cg; ++c) {
                const float* ip = &x.f[static_cast<std::size_t>(((n * C + grp * Cg + c) * H) * W)];
                const float* wp = &w.f[static_cast<std::size_t>(((m * Cg + c) * g.kh) * g.kw)];
                for (std::int64_t ky = 0; ky < g.kh; ++ky) {
                    for (std::int64_t kx = 0; kx < g.kw; ++kx) {
                        const float wv = wp[ky * g.kw + kx];
                        for (std::int64_t oy = 0; oy < g.oh; ++oy) {
                            const std::int64_t iy = oy * g.sh - g.pt + ky * g.dh;
                            if (iy < 0 || iy >= H) continue;
                            for (std::int64_t ox = 0; ox < g.ow; ++ox) {
                                const std::int64_t ix = ox * g.sw - g.pl + kx * g.dw;
                                if (ix < 0 || ix >= W) continue;
                                op[oy * g.ow + ox] += wv * ip[iy * W + ix];
                            }
                        }
                    }
                }
            }
        }
    }
    return out;
}

Value pool(const pb::NodeProto& node, const Value& x, bool is_max) {
    need_float(node, x);
    if (x.shape.size() != 4) fail(node, "only 2D pooling (NCHW) is supported");
    const Shape ks = attr_ints(node, "kernel_shape");
    if (ks.size() != 2) fail(node, "kernel_shape must have two entries");
    const bool ceil_mode = attr_int(node, "ceil_mode", 0) != 0;
    const bool include_pad = attr_int(node, "count_include_pad", 0) != 0;
    const auto g = spatial(node, x.shape, ks[0], ks[1], ceil_mode);
    const std::int64_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
    Value out;
    out.shape = {N, C, g.oh, g.ow};
    out.f.resize(out.numel());
    for (std::int64_t nc = 0; nc < N * C; ++nc) {
        const float* ip = &x.f[static_cast<std::size_t>(nc * H * W)];
        float* op = &out.f[static_cast<std::size_t>(nc * g.oh * g.ow)];
        for (std::int64_t oy = 0; oy < g.oh; ++oy) {
            for (std::int64_t ox = 0; ox < g.ow; ++ox) {
                float acc = is_max ? -std::numeric_limits<float>::infinity() : 0.0f;
                std::int64_t count = 0;
                std::int64_t padded_count = 0;
                for (std::int64_t ky = 0; ky < g.kh; ++ky) {
                    const std::int64_t iy = oy * g.sh - g.pt + ky * g.dh;
                    for (std::int64_t kx = 0; kx < g.kw; ++kx) {
                        const std::int64_t ix = ox * g.sw - g.pl + kx * g.dw;
                        // Windows hanging past the padded extent (ceil_mode) never count.
                        if (iy < H + g.pb && ix < W + g.pr) ++padded_count;
                        if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                        const float v = ip[iy * W + ix];
                        acc = is_max ? std::max(acc, v) : acc + v;
                        ++count;
                    }
                }
                if (!is_max) {
                    const std::int64_t d = include_pad ? padded_count : count;
                    acc = d > 0 ? acc / static_cast<float>(d) : 0.0f;
                }
                op[oy * g.ow + ox] = acc;
            }
        }
    }
    return out;
}

Value gemm(const pb::NodeProto& node, const Value& a, const Value& b, const Value* c) {
    need_float(node, a);
    need_float(node, b);
    if (a.shape.size() != 2 || b.shape.size() != 2) fail(node, "Gemm operands must be 2D");
    const bool ta = attr_int(node, "transA", 0) != 0;
    const bool tb = attr_int(node, "transB", 0) != 0;
    const float alpha = attr_float(node, "alpha", 1.0f);
    const float beta = attr_float(node, "beta", 1.0f);
    const std::int64_t M = ta ? a.shape[1] : a.shape[0];
    const std::int64_t K = ta ? a.shape[0] : a.shape[1];
    const std::int64_t Kb = tb ? b.shape[1] : b.shape[0];
    const std::int64_t N = tb ? b.shape[0] : b.shape[1];
    if (K != Kb) fail(node, "inner dimensions differ: " + shape_str(a.shape) + " x " + shape_str(b.shape));
    Value out;
    out.shape = {M, N};
    out.f.assign(out.numel(), 0.0f);
    for (std::int64_t m = 0; m < M; ++m) {
        for (std::int64_t n = 0; n < N; ++n) {
            double acc = 0.0;
            for (std::int64_t k = 0; k < K; ++k) {
                const float av = ta ? a.f[static_cast<std::size_t>(k * M + m)] : a.f[static_cast<std::size_t>(m * K + k)];
                const float bv = tb ? b.f[static_cast<std::size_t>(n * K + k)] : b.f[static_cast<std::size_t>(k * N + n)];
                acc += static_cast<double>(av) * bv;
            }
            out.f[static_cast<std::size_t>(m * N + n)] = alpha * static_cast<float>(acc);
        }
    }
    if (c) {
        need_float(node, *c);
        const Shape bs = broadcast_shape(node, out.shape, c->shape);
        if (bs != out.shape) fail(node, "bias " + shape_str(c->shape) + " does not broadcast to " + shape_str(out.shape));
        const auto offs = broadcast_offsets(c->shape, out.shape);
        for (std::size_t k = 0; k < out.f.size(); ++k) out.f[k] += beta * c->f[offs[k]];
    }
    return out;
}

Value matmul(const pb::NodeProto& node, const Value& a, const Value& b) {
    need_float(node, a);
    need_float(node, b);
    if (a.shape.empty() || b.shape.size() != 2) fail(node, "MatMul supports an N-D left operand and a 2D right operand");
    const std::int64_t K = a.shape.back();
    if (b.shape[0] != K) fail(node, "inner dimensions differ: " + shape_str(a.shape) + " x " + shape_str(b.shape));
    const std::int64_t N = b.shape[1];
    const std::int64_t rows = static_cast<std::int64_t>(a.numel()) / std::max<std::int64_t>(K, 1);
    Value out;
    out.shape = a.shape;
    out.shape.back() = N;
    out.f.assign(static_cast<std::size_t>(rows * N), 0.0f);
    for (std::int64_t r = 0; r < rows; ++r) {
        for (std::int64_t n = 0; n < N; ++n) {
            double acc = 0.0;
            for (std::int64_t k = 0; k < K; ++k) {
                acc += static_cast<double>(a.f[static_cast<std::size_t>(r * K + k)]) * b.f[static_cast<std::size_t>(k * N + n)];
            }
            out.f[static_cast<std::size_t>(r * N + n)] = static_cast<float>(acc);
        }
    }
    return out;
}

Value batch_norm(const pb::NodeProto& node, const std::vector<const Value*>& in) {
    if (in.size() < 5) fail(node, "BatchNormalization needs five inputs");
    const Value& x = need_float(node, *in[0]);
    if (x.shape.size() < 2) fail(node, "input must have a channel axis");
    const std::int64_t C = x.shape[1];
    for (int k = 1; k < 5; ++k) {
        if (in[k]->is_int || in[k]->numel() != static_cast<std::size_t>(C)) fail(node, "per-channel parameter length mismatch");
    }
    const float eps = attr_float(node, "epsilon", 1e-5f);
    std::size_t inner = 1;
    for (std::size_t k = 2; k < x.shape.size(); ++k) inner *= static_cast<std::size_t>(x.shape[k]);
    Value out = x;
    for (std::size_t k = 0; k < out.f.size(); ++k) {
        const std::size_t c = (k / inner) % static_cast<std::size_t>(C);
        const float inv = 1.0f / std::sqrt(in[4]->f[c] + eps);
        out.f[k] = (x.f[k] - in[3]->f[c]) * inv * in[1]->f[c] + in[2]->f[c];
    }
    return out;
}

Value reshape(const pb::NodeProto& node, const Value& x, const Shape& target) {
    Shape out = target;
    std::int64_t known = 1;
    int infer = -1;
    for (std::size_t k = 0; k < out.size(); ++k) {
        if (out[k] == 0) {
            if (k >= x.shape.size()) fail(node, "reshape copies a dimension the input lacks");
            out[k] = x.shape[k];
        }
        if (out[k] == -1) {
            if (infer >= 0) fail(node, "more than one inferred dimension");
            infer = static_cast<int>(k);
        } else {
            known *= out[k];
        }
    }
    const auto n = static_cast<std::int64_t>(x.numel());
    if (infer >= 0) {
        if (known == 0 || n % known != 0) fail(node, "cannot infer dimension");
        out[static_cast<std::size_t>(infer)] = n / known;
    } else if (known != n) {
        fail(node, "cannot reshape " + shape_str(x.shape) + " to " + shape_str(target));
    }
    Value v = x;
    v.shape = out;
    return v;
}

Value gather(const pb::NodeProto& node, const Value& data, const Value& idx) {
    const Shape indices = int_values(node, idx);
    if (data.shape.empty()) fail(node, "cannot gather from a scalar");
    const std::int64_t axis = norm_axis(node, attr_int(node, "axis", 0), data.shape.size());
    const std::int64_t dim = data.shape[static_cast<std::size_t>(axis)];
    Value out;
    out.is_int = data.is_int;
    out.shape.assign(data.shape.begin(), data.shape.begin() + axis);
    out.shape.insert(out.shape.end(), idx.shape.begin(), idx.shape.end());
    out.shape.insert(out.shape.end(), data.shape.begin() + axis + 1, data.shape.end());
    std::int64_t outer = 1;
    for (std::int64_t k = 0; k < axis; ++k) outer *= data.shape[static_cast<std::size_t>(k)];
    std::int64_t inner = 1;
    for (std::size_t k = static_cast<std::size_t>(axis) + 1; k < data.shape.size(); ++k) inner *= data.shape[k];
    for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t j : indices) {
            if (j < 0) j += dim;
            if (j < 0 || j >= dim) fail(node, "index out of range");
            const std::size_t base = static_cast<std::size_t>((o * dim + j) * inner);
            for (std::int64_t k = 0; k < inner; ++k) {
                if (data.is_int) out.i.push_back(data.i[base + static_cast<std::size_t>(k)]);
                else out.f.push_back(data.f[base + static_cast<std::size_t>(k)]);
            }
        }
    }
    return out;
}

Value concat(const pb::NodeProto& node, const std::vector<const Value*>& in) {
    if (in.empty()) fail(node, "Concat needs inputs");
    const Value& first = *in[0];
    const std::int64_t axis = norm_axis(node, attr_int(node, "axis", 0), first.shape.size());
    Value out;
    out.is_int = first.is_int;
    out.shape = first.shape;
    out.shape[static_cast<std::size_t>(axis)] = 0;
    for (const Value* v : in) {
        if (v->is_int != first.is_int || v->shape.size() != first.shape.size()) fail(node, "inputs disagree in type or rank");
        for (std::size_t k = 0; k < first.shape.size(); ++k) {
            if (static_cast<std::int64_t>(k) != axis && v->shape[k] != first.shape[k]) fail(node, "inputs disagree in shape");
        }
        out.shape[static_cast<std::size_t>(axis)] += v->shape[static_cast<std::size_t>(axis)];
    }
    std::int64_t outer = 1;
    for (std::int64_t k = 0; k < axis; ++k) outer *= first.shape[static_cast<std::size_t>(k)];
    for (std::int64_t o = 0; o < outer; ++o) {
        for (const Value* v : in) {
            const std::size_t chunk = v->numel() / static_cast<std::size_t>(std::max<std::int64_t>(outer, 1));
            const std::size_t base = static_cast<std::size_t>(o) * chunk;
            if (v->is_int) out.i.insert(out.i.end(), v->i.begin() + base, v->i.begin() + base + chunk);
            else out.f.insert(out.f.end(), v->f.begin() + base, v->f.begin() + base + chunk);
        }
    }
    return out;
}

Shape axes_of(const pb::NodeProto& node, const std::vector<const Value*>& in) {
    if (in.size() > 1 && in[1]) return int_values(node, *in[1]);
    return attr_ints(node, "axes");
}

Value squeeze(const pb::NodeProto& node, const std::vector<const Value*>& in) {
    Value v = *in[0];
    Shape axes = axes_of(node, in);
    Shape out;
    if (axes.empty()) {
        for (auto d : v.shape) if (d != 1) out.push_back(d);
    } else {
        for (auto& a : axes) a = norm_axis(node, a, v.shape.size());
        for (std::size_t k = 0; k < v.shape.size(); ++k) {
            if (std::find(axes.begin(), axes.end(), static_cast<std::int64_t>(k)) != axes.end()) {
                if (v.shape[k] != 1) fail(node, "cannot squeeze a dimension of size " + std::to_string(v.shape[k]));
                continue;
            }
            out.push_back(v.shape[k]);
        }
    }
    v.shape = out;
    return v;
}

Value unsqueeze(const pb::NodeProto& node, const std::vector<const Value*>& in) {
    Value v = *in[0];
    Shape axes = axes_of(node, in);
    const std::size_t rank = v.shape.size() + axes.size();
    for (auto& a : axes) a = norm_axis(node, a, rank);
    std::sort(axes.begin(), axes.end());
    Shape out;
    std::size_t src = 0;
    for (std::size_t k = 0; k < rank; ++k) {
        if (std::binary_search(axes.begin(), axes.end(), static_cast<std::int64_t>(k))) out.push_back(1);
        else out.push_back(v.shape[src++]);
    }
    v.shape = out;
    return v;
}

Value constant(const pb::NodeProto& node) {
    if (const auto* a = find_attr(node, "value")) return from_tensor_proto(a->t(), "Constant");
    Value v;
    if (const auto* a = find_attr(node, "value_float")) {
        v.f = {a->f()};
    } else if (const auto* a = find_attr(node, "value_floats")) {
        v.f.assign(a->floats().begin(), a->floats().end());
        v.shape = {static_cast<std::int64_t>(v.f.size())};
    } else if (const auto* a = find_attr(node, "value_int")) {
        v.is_int = true;
        v.i = {a->i()};
    } else if (const auto* a = find_attr(node, "value_ints")) {
        v.is_int = true;
        v.i.assign(a->ints().begin(), a->ints().end());
        v.shape = {static_cast<std::int64_t>(v.i.size())};
    } else {
        fail(node, "Constant without a supported value attribute");
    }
    return v;
}

template <typename F>
Value unary(const pb::NodeProto& node, const Value& x, F f) {
    Value out = need_float(node, x);
    for (float& v : out.f) v = f(v);
    return out;
}

Value cast(const pb::NodeProto& node, const Value& x) {
    const auto to = attr_int(node, "to", pb::TensorProto::FLOAT);
    Value out;
    out.shape = x.shape;
    if (to == pb::TensorProto::FLOAT || to == pb::TensorProto::DOUBLE) {
        if (x.is_int) out.f.assign(x.i.begin(), x.i.end());
        else out.f = x.f;
    } else if (to == pb::TensorProto::INT64 || to == pb::TensorProto::INT32) {
        out.is_int = true;
        if (x.is_int) out.i = x.i;
        else for (float v : x.f) out.i.push_back(static_cast<std::int64_t>(v));
    } else {
        fail(node, "unsupported cast target " + std::to_string(to));
    }
    return out;
}

std::vector<Value> execute(const pb::NodeProto& node, const std::vector<const Value*>& in) {
    const std::string& op = node.op_type();
    auto arg = [&](std::size_t k) -> const Value& {
        if (k >= in.size() || !in[k]) fail(node, "missing input " + std::to_string(k));
        return *in[k];
    };
    auto opt = [&](std::size_t k) -> const Value* { return k < in.size() ? in[k] : nullptr; };
    if (op == "Conv") return {conv(node, arg(0), arg(1), opt(2))};
    if (op == "Relu") return {unary(node, arg(0), [](float v) { return v > 0.0f ? v : 0.0f; })};
    if (op == "LeakyRelu") {
        const float alpha = attr_float(node, "alpha", 0.01f);
        return {unary(node, arg(0), [alpha](float v) { return v >= 0.0f ? v : alpha * v; })};
    }
    if (op == "Sigmoid") return {unary(node, arg(0), [](float v) { return 1.0f / (1.0f + std::exp(-v)); })};
    if (op == "Tanh") return {unary(node, arg(0), [](float v) { return std::tanh(v); })};
    if (op == "Clip") {
        float lo = attr_float(node, "min", -std::numeric_limits<float>::infinity());
        float hi = attr_float(node, "max", std::numeric_limits<float>::infinity());
        if (const Value* v = opt(1); v && !v->f.empty()) lo = v->f[0];
        if (const Value* v = opt(2); v && !v->f.empty()) hi = v->f[0];
        return {unary(node, arg(0), [lo, hi](float v) { return std::clamp(v, lo, hi); })};
    }
    if (op == "MaxPool") return {pool(node, arg(0), true)};
    if (op == "AveragePool") return {pool(node, arg(0), false)};
    if (op == "GlobalAveragePool") {
        const Value& x = need_float(node, arg(0));
        if (x.shape.size() < 3) fail(node, "input must be at least 3D");
        Value out;
        out.shape = {x.shape[0], x.shape[1]};
        std::size_t inner = 1;
        for (std::size_t k = 2; k < x.shape.size(); ++k) {
            inner *= static_cast<std::size_t>(x.shape[k]);
            out.shape.push_back(1);
        }
        const std::size_t planes = x.numel() / inner;
        out.f.resize(planes);
        for (std::size_t p = 0; p < planes; ++p) {
            double acc = 0.0;
            for (std::size_t k = 0; k < inner; ++k) acc += x.f[p * inner + k];
            out.f[p] = static_cast<float>(acc / static_cast<double>(inner));
        }
        return {out};
    }
    if (op == "Flatten") {
        const Value& x = arg(0);
        std::int64_t axis = attr_int(node, "axis", 1);
        if (axis < 0) axis += static_cast<std::int64_t>(x.shape.size());
        if (axis < 0 || axis > static_cast<std::int64_t>(x.shape.size())) fail(node, "axis out of range");
        std::int64_t outer = 1;
        for (std::int64_t k = 0; k < axis; ++k) outer *= x.shape[static_cast<std::size_t>(k)];
        Value v = x;
        v.shape = {outer, static_cast<std::int64_t>(x.numel()) / std::max<std::int64_t>(outer, 1)};
        return {v};
    }
    if (op == "Reshape") return {reshape(node, arg(0), int_values(node, arg(1)))};
    if (op == "Gemm") return {gemm(node, arg(0), arg(1), opt(2))};
    if (op == "MatMul") return {matmul(node, arg(0), arg(1))};
    if (op == "Add" || op == "Sub" || op == "Mul" || op == "Div") return {elementwise(node, arg(0), arg(1))};
    if (op == "BatchNormalization") return {batch_norm(node, in)};
    if (op == "Identity" || op == "Dropout") return {arg(0)};
    if (op == "Constant") return {constant(node)};
    if (op == "Cast") return {cast(node, arg(0))};
    if (op == "Shape") {
        const Value& x = arg(0);
        const auto r = static_cast<std::int64_t>(x.shape.size());
        std::int64_t start = attr_int(node, "start", 0);
        std::int64_t end = attr_int(node, "end", r);
        if (start < 0) start += r;
        if (end < 0) end += r;
        start = std::clamp<std::int64_t>(start, 0, r);
        end = std::clamp<std::int64_t>(end, start, r);
        Value v;
        v.is_int = true;
        v.i.assign(x.shape.begin() + start, x.shape.begin() + end);
        v.shape = {end - start};
        return {v};
    }
    if (op == "Gather") return {gather(node, arg(0), arg(1))};
    if (op == "Concat") return {concat(node, in)};
    if (op == "Squeeze") return {squeeze(node, in)};
    if (op == "Unsqueeze") return {unsqueeze(node, in)};
    fail(node, "unsupported operator");
}

const std::vector<std::string> kSupportedOps = {
    "Conv", "Relu", "LeakyRelu", "Sigmoid", "Tanh", "Clip", "MaxPool", "AveragePool",
    "GlobalAveragePool", "Flatten", "Reshape", "Gemm", "MatMul", "Add", "Sub", "Mul", "Div",
    "BatchNormalization", "Identity", "Dropout", "Constant", "Cast", "Shape", "Gather", "Concat",
    "Squeeze", "Unsqueeze"};

ValueSpec spec_of(const pb::ValueInfoProto& vi) {
    ValueSpec s;
    s.name = vi.name();
    if (vi.has_type() && vi.type().has_tensor_type()) {
        const auto& tt = vi.type().tensor_type();
        s.elem_type = tt.elem_type();
        if (tt.has_shape()) {
            for (const auto& d : tt.shape().dim()) {
                s.dims.push_back(d.value_case() == pb::TensorShapeProto::Dimension::kDimValue ? d.dim_value() : -1);
            }
        }
    }
    return s;
}

}  // namespace

struct Graph::Impl {
    pb::GraphProto graph;
    std::vector<ValueSpec> inputs;
    std::vector<ValueSpec> outputs;
    std::unordered_map<std::string, Value> initializers;
};

Graph::Graph(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {}
Graph::Graph(Graph&&) noexcept = default;
Graph& Graph::operator=(Graph&&) noexcept = default;
Graph::~Graph() = default;

const std::vector<ValueSpec>& Graph::inputs() const noexcept { return impl_->inputs; }
const std::vector<ValueSpec>& Graph::outputs() const noexcept { return impl_->outputs; }

std::vector<std::string> Graph::op_types() const {
    std::vector<std::string> ops;
    for (const auto& n : impl_->graph.node()) ops.push_back(n.op_type());
    return ops;
}

Graph Graph::load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ModelLoadError("cannot open model '" + path.string() + "'");
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse(ss.str(), path.string());
}

Graph Graph::parse(const std::string& bytes, const std::string& origin) {
    pb::ModelProto model;
    if (bytes.empty() || !model.ParseFromString(bytes)) {
        throw ModelLoadError("'" + origin + "' is not a serialized ONNX model");
    }
    if (!model.has_graph() || model.graph().node_size() == 0) {
        throw ModelLoadError("'" + origin + "' contains no graph nodes");
    }
    auto impl = std::make_unique<Impl>();
    impl->graph = model.graph();
    for (const auto& t : impl->graph.initializer()) {
        impl->initializers.emplace(t.name(), from_tensor_proto(t, "initializer"));
    }
    for (const auto& vi : impl->graph.input()) {
        if (!impl->initializers.contains(vi.name())) impl->inputs.push_back(spec_of(vi));
    }
    for (const auto& vi : impl->graph.output()) impl->outputs.push_back(spec_of(vi));
    for (const auto& n : impl->graph.node()) {
        if (!n.domain().empty() && n.domain() != "ai.onnx") {
            throw ModelLoadError("node " + n.op_type() + ": operator domain '" + n.domain() + "' is not supported");
        }
        if (std::find(kSupportedOps.begin(), kSupportedOps.end(), n.op_type()) == kSupportedOps.end()) {
            throw ModelLoadError("unsupported operator '" + n.op_type() + "'" +
                                 (n.name().empty() ? "" : " in node '" + n.name() + "'"));
        }
    }
    return Graph(std::move(impl));
}

Tensor Graph::run(const Tensor& input) const {
    if (impl_->inputs.size() != 1 || impl_->outputs.empty()) {
        throw ModelLoadError("graph must have exactly one runtime input and at least one output");
    }
    if (static_cast<std::size_t>(input.numel()) != input.data.size()) {
        throw ContractError("input tensor data does not match its shape");
    }
    std::unordered_map<std::string, Value> values;
    Value x;
    x.shape = input.shape;
    x.f = input.data;
    values.emplace(impl_->inputs[0].name, std::move(x));
    auto lookup = [&](const std::string& name) -> const Value* {
        if (name.empty()) return nullptr;
        if (auto it = values.find(name); it != values.end()) return &it->second;
        if (auto it = impl_->initializers.find(name); it != impl_->initializers.end()) return &it->second;
        throw ModelLoadError("value '" + name + "' is used before it is produced");
    };
    for (const auto& node : impl_->graph.node()) {
        std::vector<const Value*> in;
        in.reserve(static_cast<std::size_t>(node.input_size()));
        for (const auto& name : node.input()) in.push_back(lookup(name));
        auto out = execute(node, in);
        for (std::size_t k = 0; k < out.size() && k < static_cast<std::size_t>(node.output_size()); ++k) {
            values[node.output(static_cast<int>(k))] = std::move(out[k]);
        }
    }
    const Value* y = lookup(impl_->outputs[0].name);
    if (y->is_int) throw ModelLoadError("output '" + impl_->outputs[0].name + "' is not a float tensor");
    return Tensor{y->shape, y->f};
}

}  // namespace psfdeconv::onnx
