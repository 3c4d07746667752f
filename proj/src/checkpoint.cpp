#include "ulb/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

namespace ulb {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian; byte swapping is not implemented");

constexpr char kMagic[4] = {'U', 'N', 'L', 'M'};

void write_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }

std::uint32_t read_u32(std::istream& is) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    return v;
}

}  // namespace

void save_checkpoint(const ParamsF& params, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path.string());
    os.write(kMagic, 4);
    write_u32(os, kCheckpointVersion);
    write_u32(os, static_cast<std::uint32_t>(params.num_layers()));
    for (const auto& w : params.weights) {
        write_u32(os, static_cast<std::uint32_t>(w.rows()));
        write_u32(os, static_cast<std::uint32_t>(w.cols()));
    }
    std::vector<float> row;
    for (int l = 0; l < params.num_layers(); ++l) {
        const auto& w = params.weights[static_cast<std::size_t>(l)];
        row.resize(static_cast<std::size_t>(w.cols()));
        for (Eigen::Index r = 0; r < w.rows(); ++r) {
            for (Eigen::Index c = 0; c < w.cols(); ++c) row[static_cast<std::size_t>(c)] = w(r, c);
            os.write(reinterpret_cast<const char*>(row.data()),
                     static_cast<std::streamsize>(row.size() * sizeof(float)));
        }
        const auto& b = params.biases[static_cast<std::size_t>(l)];
        os.write(reinterpret_cast<const char*>(b.data()),
                 static_cast<std::streamsize>(static_cast<std::size_t>(b.size()) * sizeof(float)));
    }
    if (!os) throw std::runtime_error("checkpoint write failed: " + path.string());
}

ParamsF load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint: " + path.string());
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("not a model checkpoint: " + path.string());
    const std::uint32_t version = read_u32(is);
    if (version != kCheckpointVersion)
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    const std::uint32_t layers = read_u32(is);
    if (layers == 0 || layers > 1024) throw std::runtime_error("corrupt checkpoint header: " + path.string());
    std::vector<std::pair<std::uint32_t, std::uint32_t>> dims(layers);
    for (auto& d : dims) {
        d.first = read_u32(is);
        d.second = read_u32(is);
    }
    ParamsF p;
    std::vector<float> row;
    for (auto [out, in] : dims) {
        MatrixX<float> w(out, in);
        row.resize(in);
        for (std::uint32_t r = 0; r < out; ++r) {
            is.read(reinterpret_cast<char*>(row.data()),
                    static_cast<std::streamsize>(row.size() * sizeof(float)));
            for (std::uint32_t c = 0; c < in; ++c) w(r, c) = row[c];
        }
        VectorX<float> b(out);
        is.read(reinterpret_cast<char*>(b.data()),
                static_cast<std::streamsize>(static_cast<std::size_t>(out) * sizeof(float)));
        p.weights.push_back(std::move(w));
        p.biases.push_back(std::move(b));
    }
    if (!is) throw std::runtime_error("truncated checkpoint: " + path.string());
    return p;
}

}  // namespace ulb
