#include "cts/training.hpp"

#include <nlohmann/json.hpp>

#include <cstring>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace cts {

namespace {

constexpr char kMagic[8] = {'C', 'T', 'S', 'W', 'B', 'L', 'B', '1'};

void write_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), sizeof v); }
void write_i64(std::ostream& os, std::int64_t v) { os.write(reinterpret_cast<const char*>(&v), sizeof v); }

void write_string(std::ostream& os, const std::string& s) {
    write_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t read_u32(std::istream& is) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
}

std::int64_t read_i64(std::istream& is) {
    std::int64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
}

std::string read_string(std::istream& is) {
    const std::uint32_t len = read_u32(is);
    std::string s(len, '\0');
    is.read(s.data(), len);
    return s;
}

void write_array(std::ostream& os, const std::string& name, const Tensor<float>& t) {
    write_string(os, name);
    write_i64(os, t.n);
    write_i64(os, t.c);
    write_i64(os, t.h);
    write_i64(os, t.w);
    os.write(reinterpret_cast<const char*>(t.v.data()), static_cast<std::streamsize>(t.numel() * sizeof(float)));
}

void read_array_into(std::istream& is, const std::string& expect_name, Tensor<float>& t) {
    const std::string name = read_string(is);
    if (name != expect_name)
        throw std::runtime_error("load_checkpoint: array order mismatch: expected '" + expect_name + "', found '" +
                                 name + "'");
    const std::int64_t n = read_i64(is), c = read_i64(is), h = read_i64(is), w = read_i64(is);
    if (n != t.n || c != t.c || h != t.h || w != t.w)
        throw std::runtime_error("load_checkpoint: shape mismatch for '" + name + "'");
    is.read(reinterpret_cast<char*>(t.v.data()), static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (!is) throw std::runtime_error("load_checkpoint: truncated blob at '" + name + "'");
}

} // namespace

void save_checkpoint(const TrainerState& st, const std::string& dir, const std::string& config_hash,
                     double last_val_dice, double last_val_iou) {
    fs::create_directories(dir);
    const fs::path blob_path = fs::path(dir) / "weights.bin";
    std::ofstream os(blob_path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("save_checkpoint: cannot write " + blob_path.string());

    os.write(kMagic, sizeof kMagic);
    write_u32(os, kCheckpointFormatVersion);
    write_i64(os, st.step);
    write_string(os, config_hash);
    write_string(os, st.rng.serialize());
    write_i64(os, st.opt.steps_taken());

    const auto& online = st.online->params();
    const auto& target = st.target->params();
    auto& opt = const_cast<AdamW<float>&>(st.opt);
    write_u32(os, static_cast<std::uint32_t>(online.size()));
    for (std::size_t i = 0; i < online.size(); ++i) write_array(os, "online/" + online[i].name, *online[i].value);
    for (std::size_t i = 0; i < target.size(); ++i) write_array(os, "target/" + target[i].name, *target[i].value);
    for (std::size_t i = 0; i < online.size(); ++i) write_array(os, "opt_m/" + online[i].name, opt.moments1()[i]);
    for (std::size_t i = 0; i < online.size(); ++i) write_array(os, "opt_v/" + online[i].name, opt.moments2()[i]);
    if (!os) throw std::runtime_error("save_checkpoint: write failed for " + blob_path.string());
    os.close();

    json man{{"format_version", kCheckpointFormatVersion},
             {"step", st.step},
             {"config_hash", config_hash},
             {"metrics", {{"val_dice", last_val_dice}, {"val_iou", last_val_iou}}},
             {"weights_file", "weights.bin"}};
    std::ofstream mo(fs::path(dir) / "manifest.json", std::ios::binary | std::ios::trunc);
    mo << man.dump(2) << '\n';
    if (!mo) throw std::runtime_error("save_checkpoint: cannot write manifest in " + dir);
}

std::string checkpoint_config_hash(const std::string& dir) {
    std::ifstream in(fs::path(dir) / "manifest.json", std::ios::binary);
    if (!in) throw std::runtime_error("load_checkpoint: missing manifest.json in " + dir);
    json man;
    try {
        in >> man;
    } catch (const json::exception& ex) {
        throw std::runtime_error("load_checkpoint: corrupt manifest.json: " + std::string(ex.what()));
    }
    return man.at("config_hash").get<std::string>();
}

TrainerState load_checkpoint(const std::string& dir, const ArchitectureConfig& arch,
                             const std::string& expected_config_hash) {
    std::ifstream min(fs::path(dir) / "manifest.json", std::ios::binary);
    if (!min) throw std::runtime_error("load_checkpoint: missing manifest.json in " + dir);
    json man;
    try {
        min >> man;
    } catch (const json::exception& ex) {
        throw std::runtime_error("load_checkpoint: corrupt manifest.json: " + std::string(ex.what()));
    }
    const int version = man.at("format_version").get<int>();
    if (version != kCheckpointFormatVersion)
        throw std::runtime_error("load_checkpoint: unsupported checkpoint format_version " +
                                 std::to_string(version) + " (expected " +
                                 std::to_string(kCheckpointFormatVersion) + ")");
    const std::string stored_hash = man.at("config_hash").get<std::string>();
    if (!expected_config_hash.empty() && stored_hash != expected_config_hash)
        throw std::runtime_error("load_checkpoint: config hash mismatch (checkpoint " + stored_hash +
                                 ", current " + expected_config_hash + ")");

    const fs::path blob_path = fs::path(dir) / man.at("weights_file").get<std::string>();
    std::ifstream is(blob_path, std::ios::binary);
    if (!is) throw std::runtime_error("load_checkpoint: missing blob " + blob_path.string());

    char magic[8];
    is.read(magic, sizeof magic);
    if (!is || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw std::runtime_error("load_checkpoint: bad magic in " + blob_path.string());
    if (read_u32(is) != kCheckpointFormatVersion)
        throw std::runtime_error("load_checkpoint: blob/manifest version mismatch");

    TrainerState st;
    st.step = read_i64(is);
    if (st.step != man.at("step").get<std::int64_t>())
        throw std::runtime_error("load_checkpoint: blob/manifest step mismatch");
    const std::string blob_hash = read_string(is);
    if (blob_hash != stored_hash) throw std::runtime_error("load_checkpoint: blob/manifest hash mismatch");
    const std::string rng_state = read_string(is);
    const std::int64_t adam_t = read_i64(is);

    st.online = std::make_unique<CtsModel<float>>(arch);
    st.target = std::make_unique<CtsModel<float>>(arch);
    st.rng.restore(rng_state);
    st.opt.attach(st.online->params());
    st.opt.set_steps_taken(adam_t);

    auto& online = st.online->params();
    auto& target = st.target->params();
    const std::uint32_t count = read_u32(is);
    if (count != online.size())
        throw std::runtime_error("load_checkpoint: parameter count mismatch (architecture config differs?)");
    for (std::size_t i = 0; i < online.size(); ++i) read_array_into(is, "online/" + online[i].name, *online[i].value);
    for (std::size_t i = 0; i < target.size(); ++i) read_array_into(is, "target/" + target[i].name, *target[i].value);
    for (std::size_t i = 0; i < online.size(); ++i) read_array_into(is, "opt_m/" + online[i].name, st.opt.moments1()[i]);
    for (std::size_t i = 0; i < online.size(); ++i) read_array_into(is, "opt_v/" + online[i].name, st.opt.moments2()[i]);
    st.online->zero_grads();
    st.target->zero_grads();
    return st;
}

} // namespace cts
