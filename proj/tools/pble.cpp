#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "pble/harness.hpp"

using namespace pble;

namespace {

int fail_config(const std::string& msg) {
    ordered_json err;
    err["error"] = msg;
    std::cerr << err.dump() << "\n";
    return 2;
}

int run_named_scenario(const std::string& name, const std::string& config_path,
                       std::uint64_t seed, bool seed_set,
                       const std::string& out, const std::string& format) {
    ordered_json raw;
    raw["scenario"] = name;
    if (!config_path.empty()) {
        std::ifstream f(config_path);
        if (!f) return fail_config("cannot open config file: " + config_path);
        try {
            raw = ordered_json::parse(f);
        } catch (const ordered_json::exception& e) {
            return fail_config(std::string("config JSON parse error: ") +
                               e.what());
        }
        raw["scenario"] = name;
    }
    try {
        auto cfg = ScenarioConfig::from_json(raw);
        if (seed_set) cfg.seed = seed;
        const auto rep = run_scenario(cfg);
        if (out.empty()) {
            std::cout << (format == "csv" ? rep.to_csv()
                                          : rep.to_json_string());
        } else {
            write_report(rep, out, format);
        }
        return 0;
    } catch (const ConfigError& e) {
        return fail_config(e.what());
    }
}

int run_vectors(std::uint64_t count, std::uint64_t seed,
                const std::string& format, const std::string& out) {
    std::ostringstream body;
    if (format == "csv")
        body << "message_hex,init_hex,channel,tag_part_hex,source_part_hex,"
                "monolithic_hex\n";
    auto records = ordered_json::array();
    for (std::uint64_t t = 0; t < count; ++t) {
        auto rng = substream(seed, 0, t);
        Bytes msg(rng() % (kMaxTagMessageBytes + 1));
        for (auto& b : msg) b = static_cast<std::uint8_t>(rng());
        const auto init = static_cast<std::uint32_t>(rng()) & kCrc24Mask;
        const int ch = static_cast<int>(rng() % 40);
        const Bytes tag_part = bits_to_bytes(tag_baseband(msg));
        const Bytes src_part =
            bits_to_bytes(source_premod(init, ch, msg.size() * 8, 0).bits);
        const Bytes mono = bits_to_bytes(encode_monolithic(msg, init, ch));
        char init_hex[8];
        std::snprintf(init_hex, sizeof init_hex, "%06x", init);
        if (format == "csv") {
            body << to_hex(msg) << "," << init_hex << "," << ch << ","
                 << to_hex(tag_part) << "," << to_hex(src_part) << ","
                 << to_hex(mono) << "\n";
        } else {
            records.push_back({{"message_hex", to_hex(msg)},
                               {"init_hex", init_hex},
                               {"channel", ch},
                               {"tag_part_hex", to_hex(tag_part)},
                               {"source_part_hex", to_hex(src_part)},
                               {"monolithic_hex", to_hex(mono)}});
        }
    }
    const std::string text =
        format == "csv" ? body.str() : records.dump(2) + "\n";
    if (out.empty()) {
        std::cout << text;
    } else {
        std::ofstream f(out, std::ios::binary);
        if (!f) return fail_config("cannot open output file: " + out);
        f << text;
    }
    return 0;
}

int run_check_paper() {
    bool all = true;
    for (const auto& c : paper_consistency()) {
        std::cout << (c.pass ? "PASS" : "FAIL") << "  " << c.name << ": got "
                  << c.got << ", want " << c.want << " (tol " << c.tolerance
                  << ")\n";
        all = all && c.pass;
    }
    return all ? 0 : 3;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"PassiveBLE backscatter link simulator"};
    app.require_subcommand(1);

    std::string config_path, out, format = "json";
    std::uint64_t seed = 0;
    bool seed_set = false;

    for (const auto& name : scenario_names()) {
        auto* sub = app.add_subcommand(name, "run the " + name + " scenario");
        sub->add_option("--config", config_path, "JSON config file");
        sub->add_option("--seed", seed, "RNG seed (overrides config)")
            ->each([&](const std::string&) { seed_set = true; });
        sub->add_option("--out", out, "output file (default stdout)");
        sub->add_option("--format", format, "json|csv")
            ->check(CLI::IsMember({"json", "csv"}));
    }

    std::uint64_t vec_count = 16, vec_seed = 0;
    std::string vec_format = "json", vec_out;
    auto* vectors = app.add_subcommand("vectors", "emit codec test vectors");
    vectors->add_option("--count", vec_count, "number of vectors");
    vectors->add_option("--seed", vec_seed, "RNG seed");
    vectors->add_option("--format", vec_format, "json|csv")
        ->check(CLI::IsMember({"json", "csv"}));
    vectors->add_option("--out", vec_out, "output file (default stdout)");

    auto* check = app.add_subcommand("check-paper",
                                     "arithmetic cross-checks of quoted numbers");

    CLI11_PARSE(app, argc, argv);

    try {
        if (vectors->parsed())
            return run_vectors(vec_count, vec_seed, vec_format, vec_out);
        if (check->parsed()) return run_check_paper();
        for (const auto& name : scenario_names())
            if (app.get_subcommand(name)->parsed())
                return run_named_scenario(name, config_path, seed, seed_set,
                                          out, format);
    } catch (const std::exception& e) {
        return fail_config(e.what());
    }
    return 2;
}
