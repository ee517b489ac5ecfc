#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "silpack/cli.hpp"

namespace fs = std::filesystem;
using namespace silpack;

namespace {

struct RunFlags {
    std::string config;
    std::vector<std::string> sets;
    std::optional<long long> seed;
    std::optional<int> iterations;
    std::optional<std::string> output;
    std::optional<double> lambda, epsilon, tau, lr_start, lr_end, clip;
    std::optional<std::string> variant, views;
    std::optional<int> resolution;
    bool incremental = false;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
    cmd->add_option("config", f.config, "JSON run configuration")->required();
    cmd->add_option("--set", f.sets, "override any config field, e.g. --set loss.lambda=0.002");
    cmd->add_option("--seed", f.seed, "random seed");
    cmd->add_option("--iterations", f.iterations, "optimizer iterations");
    cmd->add_option("-o,--output", f.output, "output directory");
    cmd->add_option("--lambda", f.lambda, "extrusion weight");
    cmd->add_option("--epsilon", f.epsilon, "extrusion buffer");
    cmd->add_option("--tau", f.tau, "render softness (normalized units)");
    cmd->add_option("--lr-start", f.lr_start, "initial learning rate");
    cmd->add_option("--lr-end", f.lr_end, "final learning rate");
    cmd->add_option("--clip", f.clip, "per-object gradient norm cap (0 disables)");
    cmd->add_option("--variant", f.variant, "intersection loss: overlap-only or literal");
    cmd->add_option("--views", f.views, "view preset: axis or five");
    cmd->add_option("--resolution", f.resolution, "image resolution");
}

template <typename T>
std::string json_text(const T& v) {
    return nlohmann::json(v).dump();
}

nlohmann::json merged_config(const RunFlags& f, bool incremental_flag) {
    nlohmann::json doc = cli::load_config_json(f.config);
    for (const std::string& s : f.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw InputError("--set expects key=value, got '" + s + "'");
        cli::apply_override(doc, s.substr(0, eq), s.substr(eq + 1));
    }
    if (f.seed) cli::apply_override(doc, "seed", json_text(*f.seed));
    if (f.iterations) cli::apply_override(doc, "optim.iterations", json_text(*f.iterations));
    if (f.output) cli::apply_override(doc, "output.dir", json_text(fs::absolute(*f.output).string()));
    if (f.lambda) cli::apply_override(doc, "loss.lambda", json_text(*f.lambda));
    if (f.epsilon) cli::apply_override(doc, "loss.epsilon", json_text(*f.epsilon));
    if (f.tau) cli::apply_override(doc, "render.tau", json_text(*f.tau));
    if (f.lr_start) cli::apply_override(doc, "optim.lr_start", json_text(*f.lr_start));
    if (f.lr_end) cli::apply_override(doc, "optim.lr_end", json_text(*f.lr_end));
    if (f.clip) cli::apply_override(doc, "optim.gradient_clip", json_text(*f.clip));
    if (f.variant) cli::apply_override(doc, "loss.variant", json_text(*f.variant));
    if (f.views) cli::apply_override(doc, "views.preset", json_text(*f.views));
    if (f.resolution) cli::apply_override(doc, "views.resolution", json_text(*f.resolution));
    if (incremental_flag) cli::apply_override(doc, "incremental.enabled", "true");
    return doc;
}

std::vector<double> parse_numbers(const std::string& text, std::size_t count, const std::string& flag) {
    std::vector<double> out;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        try {
            out.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw InputError(flag + ": '" + item + "' is not a number");
        }
    }
    if (out.size() != count) throw InputError(flag + " expects " + std::to_string(count) + " comma-separated numbers");
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Silhouette-guided rigid packing and part assembly"};
    app.require_subcommand(1);
    std::optional<int> threads;
    app.add_option("--threads", threads, "worker threads (also SILPACK_THREADS)");

    RunFlags pack_flags;
    CLI::App* pack = app.add_subcommand("pack", "pack objects into a container");
    add_run_flags(pack, pack_flags);
    pack->add_flag("--incremental", pack_flags.incremental, "grow the object count from the initial estimate");

    RunFlags assemble_flags;
    CLI::App* assemble = app.add_subcommand("assemble", "reassemble parts into a whole");
    add_run_flags(assemble, assemble_flags);

    cli::BakeOptions bake_opts;
    std::string bake_box;
    CLI::App* bake = app.add_subcommand("bake", "bake a mesh SDF to a binary grid");
    bake->add_option("mesh", bake_opts.mesh, "OBJ mesh")->required();
    bake->add_option("-o,--output", bake_opts.output, "grid file")->required();
    bake->add_option("--dims", bake_opts.dims, "nodes along the longest axis")->capture_default_str();
    bake->add_option("--box", bake_box, "lattice box xmin,ymin,zmin,xmax,ymax,zmax");

    cli::RenderOptions render_opts;
    std::string render_ids;
    CLI::App* render = app.add_subcommand("render", "render silhouettes of a packed result");
    render->add_option("result", render_opts.result, "result.json of a pack or assemble run")->required();
    render->add_option("-o,--output", render_opts.output, "output directory (default: <result dir>/renders)");
    render->add_option("--objects", render_ids, "comma-separated object ids to include");
    render->add_option("--views", render_opts.view_preset, "axis or five instead of the run's views");
    render->add_flag("--threshold", render_opts.threshold, "binarize at 0.5");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : cli::kInputError;
    }

    if (threads) {
        if (*threads < 1) {
            std::cerr << "input error: --threads must be positive\n";
            return cli::kInputError;
        }
        setenv("SILPACK_THREADS", std::to_string(*threads).c_str(), 1);
    }

    try {
        if (*pack) {
            const fs::path base = fs::path(pack_flags.config).parent_path();
            return cli::cmd_pack(merged_config(pack_flags, pack_flags.incremental), base, std::cout);
        }
        if (*assemble) {
            const fs::path base = fs::path(assemble_flags.config).parent_path();
            return cli::cmd_assemble(merged_config(assemble_flags, false), base, std::cout);
        }
        if (*bake) {
            if (!bake_box.empty()) {
                const std::vector<double> v = parse_numbers(bake_box, 6, "--box");
                bake_opts.box = Aabb{Vec3(v[0], v[1], v[2]), Vec3(v[3], v[4], v[5])};
            }
            return cli::cmd_bake(bake_opts, std::cout);
        }
        if (*render) {
            if (!render_ids.empty()) {
                for (double id : parse_numbers(render_ids, std::count(render_ids.begin(), render_ids.end(), ',') + 1,
                                               "--objects")) {
                    if (id != std::floor(id)) throw InputError("--objects expects integer ids");
                    render_opts.objects.push_back(static_cast<int>(id));
                }
            }
            return cli::cmd_render(render_opts, std::cout);
        }
    } catch (const std::exception& e) {
        return cli::report_error(e, std::cerr);
    }
    return cli::kInternal;
}
