#include "selfc/checkpoint.hpp"

#include "selfc/errors.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <map>
#include <sstream>

namespace selfc {

namespace fs = std::filesystem;

namespace {

constexpr const char* kMagic = "selfc-checkpoint";

const std::map<std::string, torch::Dtype>& dtype_names() {
    static const std::map<std::string, torch::Dtype> kNames{
        {"float32", torch::kFloat32}, {"float64", torch::kFloat64}, {"int64", torch::kInt64},
        {"int32", torch::kInt32},     {"uint8", torch::kUInt8},     {"bool", torch::kBool},
    };
    return kNames;
}

std::string dtype_name(torch::Dtype d) {
    for (const auto& [name, dt] : dtype_names())
        if (dt == d)
            return name;
    throw CheckpointError(std::string("unsupported dtype ") + c10::toString(d));
}

std::string shape_text(const torch::Tensor& t) {
    if (t.dim() == 0)
        return "-";
    std::string s;
    for (int64_t i = 0; i < t.dim(); ++i)
        s += (i ? "," : "") + std::to_string(t.size(i));
    return s;
}

std::vector<int64_t> parse_shape(const std::string& s) {
    std::vector<int64_t> shape;
    if (s == "-")
        return shape;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        shape.push_back(std::stoll(item));
    return shape;
}

/// Byte order is fixed to little-endian on disk.
void to_little_endian(char* data, std::size_t nbytes, std::size_t width) {
    if constexpr (std::endian::native == std::endian::big) {
        for (std::size_t i = 0; i + width <= nbytes; i += width)
            std::reverse(data + i, data + i + width);
    } else {
        (void)data, (void)nbytes, (void)width;
    }
}

} // namespace

const torch::Tensor* Checkpoint::find(const std::string& name) const {
    for (const auto& t : tensors)
        if (t.name == name)
            return &t.value;
    return nullptr;
}

void save_checkpoint(const Checkpoint& ckpt, const fs::path& dir) {
    fs::create_directories(dir);
    std::ostringstream manifest;
    manifest << kMagic << ' ' << Checkpoint::kFormatVersion << '\n';
    manifest << "iteration " << ckpt.iteration << '\n';

    std::ofstream blob(dir / "blob.bin", std::ios::binary | std::ios::trunc);
    int64_t offset = 0;
    for (const auto& [name, value] : ckpt.tensors) {
        if (name.empty() || name.find_first_of(" \t\n") != std::string::npos)
            throw CheckpointError("invalid tensor name '" + name + "'");
        auto t = value.detach().cpu().contiguous();
        const auto nbytes = static_cast<int64_t>(t.nbytes());
        std::vector<char> bytes(static_cast<const char*>(t.data_ptr()),
                                static_cast<const char*>(t.data_ptr()) + nbytes);
        to_little_endian(bytes.data(), bytes.size(), t.element_size());
        blob.write(bytes.data(), nbytes);
        manifest << "tensor " << name << ' ' << dtype_name(t.scalar_type()) << ' ' << shape_text(t) << ' '
                 << offset << ' ' << nbytes << '\n';
        offset += nbytes;
    }
    if (!blob)
        throw CheckpointError("cannot write " + (dir / "blob.bin").string());

    std::ofstream(dir / "manifest.txt", std::ios::binary | std::ios::trunc) << manifest.str();
    std::ofstream cfg(dir / "config.txt", std::ios::binary | std::ios::trunc);
    cfg << ckpt.config_text;
    if (!cfg)
        throw CheckpointError("cannot write " + (dir / "config.txt").string());
}

Checkpoint load_checkpoint(const fs::path& dir) {
    std::ifstream manifest(dir / "manifest.txt");
    if (!manifest)
        throw CheckpointError("no checkpoint manifest in " + dir.string());
    std::ifstream blob_in(dir / "blob.bin", std::ios::binary);
    if (!blob_in)
        throw CheckpointError("no checkpoint blob in " + dir.string());
    std::vector<char> blob((std::istreambuf_iterator<char>(blob_in)), std::istreambuf_iterator<char>());

    Checkpoint ckpt;
    std::string line;
    int lineno = 0;
    while (std::getline(manifest, line)) {
        ++lineno;
        std::istringstream ss(line);
        std::string head;
        ss >> head;
        auto fail = [&](const std::string& why) {
            return CheckpointError(dir.string() + "/manifest.txt:" + std::to_string(lineno) + ": " + why);
        };
        if (lineno == 1) {
            int version = 0;
            if (head != kMagic || !(ss >> version))
                throw fail("not a checkpoint manifest");
            if (version != Checkpoint::kFormatVersion)
                throw fail("unsupported format version " + std::to_string(version));
        } else if (head == "iteration") {
            if (!(ss >> ckpt.iteration))
                throw fail("malformed iteration");
        } else if (head == "tensor") {
            std::string name, dtype, shape;
            int64_t offset = 0, nbytes = 0;
            if (!(ss >> name >> dtype >> shape >> offset >> nbytes))
                throw fail("malformed tensor line");
            auto it = dtype_names().find(dtype);
            if (it == dtype_names().end())
                throw fail("unknown dtype " + dtype);
            if (offset < 0 || nbytes < 0 || offset + nbytes > static_cast<int64_t>(blob.size()))
                throw fail("tensor '" + name + "' lies outside the blob");
            auto t = torch::empty(parse_shape(shape), torch::TensorOptions().dtype(it->second));
            if (static_cast<int64_t>(t.nbytes()) != nbytes)
                throw fail("byte count of '" + name + "' does not match its shape");
            auto* dst = static_cast<char*>(t.data_ptr());
            std::copy_n(blob.data() + offset, nbytes, dst);
            to_little_endian(dst, static_cast<std::size_t>(nbytes), t.element_size());
            ckpt.tensors.push_back({name, t});
        } else if (!head.empty()) {
            throw fail("unexpected entry '" + head + "'");
        }
    }
    if (lineno == 0)
        throw CheckpointError("empty checkpoint manifest in " + dir.string());

    std::ifstream cfg(dir / "config.txt", std::ios::binary);
    if (cfg) {
        std::stringstream ss;
        ss << cfg.rdbuf();
        ckpt.config_text = ss.str();
    }
    return ckpt;
}

} // namespace selfc
