#include <cstdint>
#include <fstream>

#include "atomic_file.hpp"
#include "binary_io.hpp"
#include "igsc/error.hpp"
#include "igsc/trainer.hpp"

namespace igsc {

namespace {

constexpr std::string_view kModelMagic = "IGSCMDL1";

// Header: variant, d, h, input dim, h1, h2, hidden activation; all u32.
std::uint32_t activation_code(Activation a) {
    switch (a) {
        case Activation::tanh: return 0;
        case Activation::relu: return 1;
        case Activation::sigmoid: return 2;
    }
    return 0;
}

Activation activation_from_code(std::uint32_t code, const std::string& what) {
    switch (code) {
        case 0: return Activation::tanh;
        case 1: return Activation::relu;
        case 2: return Activation::sigmoid;
    }
    throw FormatError(what + ": unknown hidden activation code " + std::to_string(code));
}

std::uint32_t narrow(std::size_t n, const char* field) {
    if (n > UINT32_MAX) throw ShapeError(std::string("checkpoint: ") + field + " too large");
    return static_cast<std::uint32_t>(n);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const HypernetParams& W) {
    W.validate();
    detail::write_file_atomically(path, [&](std::ostream& out) {
        binio::write_magic(out, kModelMagic);
        binio::write_u32(out, W.form.is_linear() ? 0u : 1u);
        binio::write_u32(out, narrow(W.form.d, "d"));
        binio::write_u32(out, narrow(W.form.is_linear() ? 0 : W.form.h, "h"));
        binio::write_u32(out, narrow(W.input_dim(), "input dim"));
        binio::write_u32(out, narrow(W.hidden1(), "h1"));
        binio::write_u32(out, narrow(W.hidden2(), "h2"));
        binio::write_u32(out, activation_code(W.hidden_activation));
        for (const auto t : W.tensors()) {
            for (const double x : t) binio::write_f64(out, x);
        }
    });
}

HypernetParams load_checkpoint(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw IoError("missing checkpoint " + path.string());
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    const std::string what = path.filename().string();
    binio::expect_magic(in, kModelMagic, what);
    const std::uint32_t variant = binio::read_u32(in, what);
    const std::uint32_t d = binio::read_u32(in, what);
    const std::uint32_t h = binio::read_u32(in, what);
    const std::uint32_t input_dim = binio::read_u32(in, what);
    const std::uint32_t h1 = binio::read_u32(in, what);
    const std::uint32_t h2 = binio::read_u32(in, what);
    const Activation act = activation_from_code(binio::read_u32(in, what), what);
    if (variant > 1) throw FormatError(what + ": unknown classifier variant " + std::to_string(variant));

    const ClassifierForm form = variant == 0 ? ClassifierForm::linear(d) : ClassifierForm::nonlinear(d, h);
    HypernetParams W;
    try {
        W = HypernetParams::zeros(input_dim, h1, h2, form, act);
    } catch (const ValidationError& e) {
        throw FormatError(what + ": invalid dimensions in header: " + e.what());
    }
    const auto expected = 8 + 7 * 4 + static_cast<std::uintmax_t>(W.parameter_count()) * 8;
    if (std::filesystem::file_size(path) != expected) {
        throw FormatError(what + ": expected " + std::to_string(expected) + " bytes, found " +
                          std::to_string(std::filesystem::file_size(path)));
    }
    for (auto t : W.tensors()) {
        for (double& x : t) x = binio::read_f64(in, what);
    }
    return W;
}

}  // namespace igsc
