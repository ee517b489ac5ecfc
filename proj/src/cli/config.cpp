#include <algorithm>
#include <fstream>
#include <numbers>
#include <set>

#include "silpack/cli.hpp"

namespace silpack::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Walks one JSON object, remembering the dotted path for error messages and
// rejecting keys nobody asked for.
class Section {
public:
    Section(const json& node, std::string path) : node_(node), path_(std::move(path)) {
        if (!node_.is_object()) fail(path_.empty() ? "config" : path_, "must be an object");
    }

    bool has(const std::string& key) {
        seen_.insert(key);
        return node_.contains(key) && !node_.at(key).is_null();
    }
    const json& at(const std::string& key) {
        seen_.insert(key);
        return node_.at(key);
    }
    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    double number(const std::string& key, double fallback) {
        if (!has(key)) return fallback;
        const json& v = at(key);
        if (!v.is_number()) fail(field(key), "must be a number");
        return v.get<double>();
    }
    int integer(const std::string& key, int fallback) {
        if (!has(key)) return fallback;
        const json& v = at(key);
        if (!v.is_number_integer()) fail(field(key), "must be an integer");
        return v.get<int>();
    }
    bool boolean(const std::string& key, bool fallback) {
        if (!has(key)) return fallback;
        const json& v = at(key);
        if (!v.is_boolean()) fail(field(key), "must be true or false");
        return v.get<bool>();
    }
    std::string string(const std::string& key, const std::string& fallback) {
        if (!has(key)) return fallback;
        const json& v = at(key);
        if (!v.is_string()) fail(field(key), "must be a string");
        return v.get<std::string>();
    }
    Vec3 vec3(const std::string& key, const Vec3& fallback) {
        if (!has(key)) return fallback;
        return to_vec3(at(key), field(key));
    }
    Section child(const std::string& key) {
        static const json empty = json::object();
        return has(key) ? Section(at(key), field(key)) : Section(empty, field(key));
    }

    void finish() const {
        for (const auto& item : node_.items()) {
            if (!seen_.count(item.key())) fail(field(item.key()), "unknown field");
        }
    }

    [[noreturn]] static void fail(const std::string& field, const std::string& what) {
        throw InputError("config field '" + field + "': " + what);
    }
    static Vec3 to_vec3(const json& v, const std::string& field) {
        if (!v.is_array() || v.size() != 3 || !std::all_of(v.begin(), v.end(), [](const json& x) { return x.is_number(); }))
            fail(field, "must be an array of three numbers");
        return {v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
    }

private:
    const json& node_;
    std::string path_;
    std::set<std::string> seen_;
};

fs::path existing_file(const json& v, const std::string& field, const fs::path& base) {
    if (!v.is_string()) Section::fail(field, "must be a path string");
    fs::path p = v.get<std::string>();
    if (p.is_relative()) p = base / p;
    if (!fs::is_regular_file(p)) Section::fail(field, "file not found: " + p.string());
    return p;
}

void require_positive(double v, const std::string& field) {
    if (!(v > 0.0)) Section::fail(field, "must be positive");
}

}  // namespace

nlohmann::json load_config_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open config file " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw InputError("config " + path.string() + " is not valid JSON: " + e.what());
    }
}

void apply_override(nlohmann::json& doc, const std::string& key, const std::string& value) {
    if (key.empty()) throw InputError("empty override key");
    json parsed;
    try {
        parsed = json::parse(value);
    } catch (const json::parse_error&) {
        parsed = value;
    }
    json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const std::size_t dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) throw InputError("malformed override key '" + key + "'");
        if (!node->is_object()) *node = json::object();
        if (dot == std::string::npos) {
            (*node)[part] = parsed;
            return;
        }
        node = &(*node)[part];
        start = dot + 1;
    }
}

RunConfig parse_run_config(const nlohmann::json& doc, const fs::path& base_dir) {
    RunConfig c;
    Section root(doc, "");

    c.mode = root.string("mode", "pack");
    if (c.mode != "pack" && c.mode != "assemble") Section::fail("mode", "must be \"pack\" or \"assemble\"");

    if (root.has("objects")) {
        const json& list = root.at("objects");
        if (!list.is_array()) Section::fail("objects", "must be an array");
        for (std::size_t i = 0; i < list.size(); ++i) {
            const std::string field = "objects[" + std::to_string(i) + "]";
            const json& item = list[i];
            if (item.is_string()) {
                c.objects.push_back(existing_file(item, field, base_dir));
                continue;
            }
            Section entry(item, field);
            if (!entry.has("path")) Section::fail(field + ".path", "is required");
            const fs::path p = existing_file(entry.at("path"), field + ".path", base_dir);
            const int count = entry.integer("count", 1);
            if (count < 1) Section::fail(field + ".count", "must be at least 1");
            entry.finish();
            c.objects.insert(c.objects.end(), static_cast<std::size_t>(count), p);
        }
    }
    if (root.has("pool_dir")) {
        const json& v = root.at("pool_dir");
        if (!v.is_string()) Section::fail("pool_dir", "must be a path string");
        fs::path p = v.get<std::string>();
        if (p.is_relative()) p = base_dir / p;
        if (!fs::is_directory(p)) Section::fail("pool_dir", "directory not found: " + p.string());
        c.pool_dir = p;
    }

    {
        Section container = root.child("container");
        if (container.has("mesh")) {
            c.container_mesh = existing_file(container.at("mesh"), container.field("mesh"), base_dir);
        } else if (c.mode == "pack") {
            if (!container.has("box")) Section::fail("container", "needs \"box\" extents or a \"mesh\" path");
            c.container_box = container.vec3("box", Vec3::Zero());
            if (!(c.container_box.array() > 0.0).all()) Section::fail("container.box", "extents must be positive");
        }
        c.container_center = container.vec3("center", Vec3::Zero());
        container.finish();
    }

    if (root.has("parts")) {
        const json& list = root.at("parts");
        if (!list.is_array()) Section::fail("parts", "must be an array");
        for (std::size_t i = 0; i < list.size(); ++i)
            c.parts.push_back(existing_file(list[i], "parts[" + std::to_string(i) + "]", base_dir));
    }
    if (root.has("whole")) c.whole = existing_file(root.at("whole"), "whole", base_dir);
    if (c.mode == "assemble") {
        if (c.parts.empty()) Section::fail("parts", "assembly needs at least one part");
        if (c.whole.empty()) Section::fail("whole", "is required for assembly");
    } else if (c.objects.empty() && !c.pool_dir) {
        Section::fail("objects", "packing needs \"objects\" or \"pool_dir\"");
    }

    {
        Section views = root.child("views");
        c.view_preset = views.string("preset", "");
        if (!c.view_preset.empty() && c.view_preset != "axis" && c.view_preset != "five")
            Section::fail("views.preset", "must be \"axis\" or \"five\"");
        c.resolution = views.integer("resolution", 64);
        if (c.resolution < 2) Section::fail("views.resolution", "must be at least 2");
        c.footprint_margin = views.number("footprint_margin", 1.2);
        require_positive(c.footprint_margin, "views.footprint_margin");
        if (views.has("custom")) {
            const json& list = views.at("custom");
            if (!list.is_array() || list.empty()) Section::fail("views.custom", "must be a non-empty array");
            for (std::size_t i = 0; i < list.size(); ++i) {
                Section v(list[i], "views.custom[" + std::to_string(i) + "]");
                ViewSpec spec;
                spec.name = v.string("name", "view" + std::to_string(i));
                if (!v.has("direction")) Section::fail(v.field("direction"), "is required");
                spec.direction = v.vec3("direction", Vec3::UnitX());
                spec.up = v.vec3("up", Vec3::UnitZ());
                if (spec.direction.norm() == 0.0) Section::fail(v.field("direction"), "must be nonzero");
                if (spec.up.cross(spec.direction).norm() < 1e-9 * spec.up.norm() * spec.direction.norm())
                    Section::fail(v.field("up"), "must not be parallel to the direction");
                if (v.has("center")) spec.center = v.vec3("center", Vec3::Zero());
                if (v.has("footprint")) {
                    spec.footprint = v.number("footprint", 1.0);
                    require_positive(*spec.footprint, v.field("footprint"));
                }
                if (v.has("resolution")) {
                    spec.resolution = v.integer("resolution", c.resolution);
                    if (*spec.resolution < 2) Section::fail(v.field("resolution"), "must be at least 2");
                }
                v.finish();
                c.custom_views.push_back(spec);
            }
        }
        views.finish();
    }

    if (root.has("targets")) {
        const json& t = root.at("targets");
        if (t.is_string()) {
            const std::string mode = t.get<std::string>();
            if (mode == "auto-container") {
                c.target_mode = mode;
            } else if (mode.rfind("strip:", 0) == 0) {
                c.target_mode = "strip";
                try {
                    std::size_t used = 0;
                    c.strip_fraction = std::stod(mode.substr(6), &used);
                    if (used != mode.size() - 6) throw std::invalid_argument(mode);
                } catch (const std::exception&) {
                    Section::fail("targets", "strip fraction in '" + mode + "' is not a number");
                }
                if (!(c.strip_fraction > 0.0 && c.strip_fraction <= 1.0))
                    Section::fail("targets", "strip fraction must lie in (0, 1]");
            } else {
                Section::fail("targets", "must be \"auto-container\", \"strip:<f>\" or a list of PNG paths");
            }
        } else if (t.is_array()) {
            c.target_mode = "images";
            for (std::size_t i = 0; i < t.size(); ++i)
                c.target_paths.push_back(existing_file(t[i], "targets[" + std::to_string(i) + "]", base_dir));
        } else {
            Section::fail("targets", "must be a string or an array of paths");
        }
    }
    if (c.mode == "assemble" && c.target_mode != "auto-container")
        Section::fail("targets", "assembly always uses the whole's silhouettes");

    {
        Section loss = root.child("loss");
        try {
            c.pack.loss.variant = parse_intersection_variant(loss.string("variant", "overlap-only"));
        } catch (const ParameterError& e) {
            Section::fail("loss.variant", e.what());
        }
        c.pack.loss.lambda = loss.number("lambda", 0.001);
        require_positive(c.pack.loss.lambda, "loss.lambda");
        c.pack.loss.epsilon = loss.number("epsilon", 0.01);
        require_positive(c.pack.loss.epsilon, "loss.epsilon");
        loss.finish();
    }
    {
        Section render = root.child("render");
        if (render.has("tau")) {
            c.tau = render.number("tau", 0.0);
            require_positive(*c.tau, "render.tau");
        }
        render.finish();
    }
    {
        Section optim = root.child("optim");
        c.pack.schedule.iterations = optim.integer("iterations", 1000);
        if (c.pack.schedule.iterations < 1) Section::fail("optim.iterations", "must be at least 1");
        c.pack.schedule.lr_start = optim.number("lr_start", 1e-2);
        c.pack.schedule.lr_end = optim.number("lr_end", 1e-4);
        require_positive(c.pack.schedule.lr_start, "optim.lr_start");
        if (c.pack.schedule.lr_end < 0.0 || c.pack.schedule.lr_end > c.pack.schedule.lr_start)
            Section::fail("optim.lr_end", "must lie in [0, lr_start]");
        c.pack.beta1 = optim.number("beta1", 0.9);
        c.pack.beta2 = optim.number("beta2", 0.999);
        if (!(c.pack.beta1 >= 0.0 && c.pack.beta1 < 1.0)) Section::fail("optim.beta1", "must lie in [0, 1)");
        if (!(c.pack.beta2 >= 0.0 && c.pack.beta2 < 1.0)) Section::fail("optim.beta2", "must lie in [0, 1)");
        c.pack.eps_hat = optim.number("eps_hat", 1e-8);
        require_positive(c.pack.eps_hat, "optim.eps_hat");
        c.pack.gradient_clip = optim.number("gradient_clip", c.pack.gradient_clip);
        if (c.pack.gradient_clip < 0.0) Section::fail("optim.gradient_clip", "must be nonnegative");
        c.pack.early_stop = optim.boolean("early_stop", false);
        optim.finish();
    }
    {
        const double seed = root.number("seed", 0.0);
        if (seed < 0.0 || seed != std::floor(seed) || seed > 9007199254740992.0)
            Section::fail("seed", "must be a nonnegative integer");
        c.pack.seed = static_cast<std::uint64_t>(seed);
    }
    {
        Section grid = root.child("grid");
        const int points = grid.integer("container_points", 80000);
        if (points < 64) Section::fail("grid.container_points", "must be at least 64");
        c.container_points = static_cast<std::size_t>(points);
        c.object_grid_dims = grid.integer("object_dims", 64);
        if (c.object_grid_dims < 8) Section::fail("grid.object_dims", "must be at least 8");
        grid.finish();
    }
    {
        Section audit = root.child("audit");
        c.pack.audit_multiplier = audit.integer("multiplier", 2);
        if (c.pack.audit_multiplier < 1) Section::fail("audit.multiplier", "must be at least 1");
        audit.finish();
    }
    {
        Section inc = root.child("incremental");
        c.incremental = inc.boolean("enabled", false);
        c.pack.allow_growth = inc.boolean("allow_growth", true);
        c.pack.residual_threshold = inc.number("residual_threshold", 0.03);
        if (c.pack.residual_threshold < 0.0 || c.pack.residual_threshold > 1.0)
            Section::fail("incremental.residual_threshold", "must lie in [0, 1]");
        c.pack.batch = inc.integer("batch", 0);
        if (c.pack.batch < 0) Section::fail("incremental.batch", "must be nonnegative");
        inc.finish();
    }
    {
        Section init = root.child("init");
        const std::string mode = init.string("mode", c.mode == "assemble" ? "perturb" : "random");
        if (mode == "random") {
            c.pack.init = InitMode::Random;
        } else if (mode == "perturb") {
            if (c.mode != "assemble") Section::fail("init.mode", "perturb initialization needs assembly ground truth");
            c.pack.init = InitMode::Perturb;
        } else {
            Section::fail("init.mode", "must be \"random\" or \"perturb\"");
        }
        const double deg = init.number("angle_deg", 30.0);
        if (deg < 0.0) Section::fail("init.angle_deg", "must be nonnegative");
        c.pack.perturb_angle = deg * std::numbers::pi / 180.0;
        c.pack.perturb_offset = init.number("offset", 0.2);
        if (c.pack.perturb_offset < 0.0) Section::fail("init.offset", "must be nonnegative");
        init.finish();
    }
    {
        Section out = root.child("output");
        fs::path dir = out.string("dir", "out");
        c.output = dir.is_relative() ? base_dir / dir : dir;
        c.export_obj = out.boolean("export_obj", true);
        out.finish();
    }
    root.finish();
    return c;
}

}  // namespace silpack::cli
