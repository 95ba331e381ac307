#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include "mdp/binary_io.hpp"
#include "mdp/unet.hpp"

namespace mdp {

/// "MDU3" checkpoint: u32 version, u32 layer count, then per layer
/// u8 kind, u32 cout, u32 cin, u32 ksize, u32 bias count,
/// f32 weights, f32 biases (little-endian, declaration order).
inline constexpr std::uint32_t checkpoint_version = 1;

/// Parameters rounded to the precision stored in a checkpoint.
inline UNetParams round_to_checkpoint(UNetParams p)
{
    for (auto& L : p.layers) {
        for (double& w : L.w) {
            w = static_cast<float>(w);
        }
        for (double& b : L.b) {
            b = static_cast<float>(b);
        }
    }
    return p;
}

inline void write_checkpoint(std::ostream& os, const UNetParams& p)
{
    io::write_magic(os, "MDU3");
    io::write_pod<std::uint32_t>(os, checkpoint_version);
    io::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(p.layers.size()));
    for (const auto& L : p.layers) {
        io::write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(L.kind));
        io::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(L.cout));
        io::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(L.cin));
        io::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(L.ksize));
        io::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(L.b.size()));
        for (double w : L.w) {
            io::write_pod<float>(os, static_cast<float>(w));
        }
        for (double b : L.b) {
            io::write_pod<float>(os, static_cast<float>(b));
        }
    }
}

inline UNetParams read_checkpoint(std::istream& is)
{
    const std::string what = "checkpoint";
    io::expect_magic(is, "MDU3", what);
    const auto version = io::read_pod<std::uint32_t>(is, what);
    if (version != checkpoint_version) {
        throw FormatError("checkpoint: unsupported version " + std::to_string(version));
    }
    const auto n_layers = io::read_pod<std::uint32_t>(is, what);
    const UNetParams ref = unet_architecture();
    if (n_layers != ref.layers.size()) {
        throw FormatError("checkpoint: expected " + std::to_string(ref.layers.size()) + " layers, found " +
                          std::to_string(n_layers));
    }
    UNetParams p;
    for (std::uint32_t l = 0; l < n_layers; ++l) {
        const auto kind = io::read_pod<std::uint8_t>(is, what);
        const auto cout = io::read_pod<std::uint32_t>(is, what);
        const auto cin = io::read_pod<std::uint32_t>(is, what);
        const auto ksize = io::read_pod<std::uint32_t>(is, what);
        const auto nb = io::read_pod<std::uint32_t>(is, what);
        const LayerParams& r = ref.layers[l];
        if (kind != static_cast<std::uint8_t>(r.kind) || static_cast<int>(cout) != r.cout ||
            static_cast<int>(cin) != r.cin || static_cast<int>(ksize) != r.ksize || nb != r.b.size()) {
            throw FormatError("checkpoint: layer " + std::to_string(l) + " does not match the architecture");
        }
        LayerParams L = r;
        for (double& w : L.w) {
            w = io::read_pod<float>(is, what);
        }
        for (double& b : L.b) {
            b = io::read_pod<float>(is, what);
        }
        p.layers.push_back(std::move(L));
    }
    return p;
}

inline void save_checkpoint(const UNetParams& p, const std::filesystem::path& path)
{
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw Error("cannot write " + path.string());
    }
    write_checkpoint(os, p);
}

inline UNetParams load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw Error("cannot open " + path.string());
    }
    return read_checkpoint(is);
}

} // namespace mdp
