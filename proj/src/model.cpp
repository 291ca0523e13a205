#include "dfl/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "dfl/errors.hpp"
#include "dfl/rng.hpp"

namespace dfl {

namespace {

constexpr char kMagic[] = "DFLMLP1\n";
constexpr std::size_t kMagicLen = 8;

void write_u32_le(std::ostream& out, std::uint32_t v) {
    unsigned char bytes[4];
    for (int i = 0; i < 4; ++i) bytes[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(bytes), 4);
}

std::uint32_t read_u32_le(std::istream& in) {
    unsigned char bytes[4];
    in.read(reinterpret_cast<char*>(bytes), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(bytes[i]) << (8 * i);
    return v;
}

void write_f64_le(std::ostream& out, double d) {
    const std::uint64_t v = std::bit_cast<std::uint64_t>(d);
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(bytes), 8);
}

double read_f64_le(std::istream& in) {
    unsigned char bytes[8];
    in.read(reinterpret_cast<char*>(bytes), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(bytes[i]) << (8 * i);
    return std::bit_cast<double>(v);
}

}  // namespace

void ParamGradient::set_zero() {
    w1.setZero(MlpModel::kHidden, MlpModel::kInput);
    b1.setZero(MlpModel::kHidden);
    w2.setZero(MlpModel::kHidden);
    b2 = 0.0;
}

void ParamGradient::accumulate(const ParamGradient& other, double weight) {
    w1 += weight * other.w1;
    b1 += weight * other.b1;
    w2 += weight * other.w2;
    b2 += weight * other.b2;
}

void ParamGradient::scale(double factor) {
    w1 *= factor;
    b1 *= factor;
    w2 *= factor;
    b2 *= factor;
}

ForwardResult forward(const MlpModel& model, const Eigen::MatrixXd& features) {
    if (features.cols() != MlpModel::kInput)
        throw ShapeMismatchError("feature rows must have length " +
                                 std::to_string(MlpModel::kInput));
    if (model.w1.rows() != MlpModel::kHidden || model.w1.cols() != MlpModel::kInput ||
        model.b1.size() != MlpModel::kHidden || model.w2.size() != MlpModel::kHidden)
        throw ShapeMismatchError("model parameter shapes are wrong");
    if (!features.allFinite()) throw ShapeMismatchError("features contain non-finite values");

    const Eigen::Index n = features.rows();
    ForwardResult out;
    out.mu_hat.resize(n);
    out.tape.inputs = features;
    out.tape.hidden.resize(n, MlpModel::kHidden);
    out.tape.model = &model;
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::VectorXd pre = model.w1 * features.row(i).transpose() + model.b1;
        const Eigen::VectorXd h = pre.array().tanh();
        out.tape.hidden.row(i) = h.transpose();
        out.mu_hat(i) = model.w2.dot(h) + model.b2;
    }
    return out;
}

ParamGradient backward(const MlpModel& model, const ForwardTape& tape,
                       const Eigen::VectorXd& upstream) {
    if (tape.model != &model) throw TapeMismatchError("tape was produced by another model");
    if (upstream.size() != tape.inputs.rows())
        throw TapeMismatchError("upstream size does not match the forward batch");

    ParamGradient grad;
    grad.set_zero();
    const Eigen::Index n = tape.inputs.rows();
    for (Eigen::Index i = 0; i < n; ++i) {
        const double u = upstream(i);
        const Eigen::VectorXd h = tape.hidden.row(i).transpose();
        grad.b2 += u;
        grad.w2 += u * h;
        // d tanh(z) = 1 - tanh(z)^2
        const Eigen::VectorXd dz =
            (u * model.w2.array() * (1.0 - h.array().square())).matrix();
        grad.b1 += dz;
        grad.w1 += dz * tape.inputs.row(i);
    }
    return grad;
}

MlpModel init_model(std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0x1417));
    MlpModel m;
    const double bound1 = std::sqrt(6.0 / (MlpModel::kInput + MlpModel::kHidden));
    // The output layer starts at 1/kHidden of its Xavier bound so that the
    // initial predictions sit well below market scale. At full Xavier scale
    // the first QP solves land on simplex vertices, where the exact solution
    // map is locally constant and regret training receives no gradient.
    const double bound2 = std::sqrt(6.0 / (MlpModel::kHidden + 1)) / MlpModel::kHidden;
    m.w1.resize(MlpModel::kHidden, MlpModel::kInput);
    for (Eigen::Index r = 0; r < m.w1.rows(); ++r)
        for (Eigen::Index c = 0; c < m.w1.cols(); ++c)
            m.w1(r, c) = rng.uniform(-bound1, bound1);
    m.b1.setZero(MlpModel::kHidden);
    m.w2.resize(MlpModel::kHidden);
    for (Eigen::Index r = 0; r < m.w2.size(); ++r) m.w2(r) = rng.uniform(-bound2, bound2);
    m.b2 = 0.0;
    return m;
}

void save_model(const MlpModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");
    out.write(kMagic, kMagicLen);
    write_u32_le(out, MlpModel::kHidden);
    write_u32_le(out, MlpModel::kInput);
    for (Eigen::Index r = 0; r < model.w1.rows(); ++r)
        for (Eigen::Index c = 0; c < model.w1.cols(); ++c) write_f64_le(out, model.w1(r, c));
    for (Eigen::Index r = 0; r < model.b1.size(); ++r) write_f64_le(out, model.b1(r));
    for (Eigen::Index r = 0; r < model.w2.size(); ++r) write_f64_le(out, model.w2(r));
    write_f64_le(out, model.b2);
    if (!out) throw Error("failed writing '" + path + "'");
}

MlpModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path + "'");
    char magic[kMagicLen];
    in.read(magic, kMagicLen);
    if (!in || std::memcmp(magic, kMagic, kMagicLen) != 0)
        throw Error("'" + path + "' is not a model checkpoint");
    const std::uint32_t hidden = read_u32_le(in);
    const std::uint32_t input = read_u32_le(in);
    if (hidden != MlpModel::kHidden || input != MlpModel::kInput)
        throw ShapeMismatchError("checkpoint shape " + std::to_string(hidden) + "x" +
                                 std::to_string(input) + " is unsupported");
    MlpModel m;
    m.w1.resize(MlpModel::kHidden, MlpModel::kInput);
    for (Eigen::Index r = 0; r < m.w1.rows(); ++r)
        for (Eigen::Index c = 0; c < m.w1.cols(); ++c) m.w1(r, c) = read_f64_le(in);
    m.b1.resize(MlpModel::kHidden);
    for (Eigen::Index r = 0; r < m.b1.size(); ++r) m.b1(r) = read_f64_le(in);
    m.w2.resize(MlpModel::kHidden);
    for (Eigen::Index r = 0; r < m.w2.size(); ++r) m.w2(r) = read_f64_le(in);
    m.b2 = read_f64_le(in);
    if (!in) throw Error("'" + path + "' is truncated");
    return m;
}

}  // namespace dfl
