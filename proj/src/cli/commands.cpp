#include <algorithm>
#include <cstdio>
#include <fstream>
#include <ostream>

#include "silpack/cli.hpp"

namespace silpack::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 json_vec(const json& v) { return {v.at(0).get<double>(), v.at(1).get<double>(), v.at(2).get<double>()}; }

std::string file_stem(const ViewConfig& view, std::size_t k) {
    std::string name = view.name;
    for (char& ch : name) {
        if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '+' && ch != '_') ch = '_';
    }
    return std::to_string(k) + "_" + name;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    out << text;
    if (!out) throw InputError("failed writing " + path.string());
}

std::vector<Mesh> load_all(const std::vector<fs::path>& paths) {
    std::vector<Mesh> meshes;
    meshes.reserve(paths.size());
    for (const fs::path& p : paths) meshes.push_back(load_mesh(p));
    return meshes;
}

std::vector<fs::path> object_paths(const RunConfig& config) {
    std::vector<fs::path> paths = config.objects;
    if (config.pool_dir) {
        std::vector<fs::path> pool;
        for (const auto& entry : fs::directory_iterator(*config.pool_dir)) {
            if (entry.is_regular_file() && entry.path().extension() == ".obj") pool.push_back(entry.path());
        }
        std::sort(pool.begin(), pool.end());
        if (pool.empty()) throw InputError("config field 'pool_dir': no .obj files in " + config.pool_dir->string());
        paths.insert(paths.end(), pool.begin(), pool.end());
    }
    return paths;
}

ContainerInput container_input(const RunConfig& config) {
    if (config.container_mesh) return ContainerInput::from_mesh(load_mesh(*config.container_mesh));
    return ContainerInput::box(config.container_box, config.container_center);
}

// Container bounds in world units, needed to place custom views.
Aabb world_container_box(const RunConfig& config) {
    if (config.mode == "assemble") return bounds(load_mesh(config.whole));
    if (config.container_mesh) return bounds(load_mesh(*config.container_mesh));
    return {config.container_center - 0.5 * config.container_box, config.container_center + 0.5 * config.container_box};
}

void warn_uncovered_views(const Scene& scene, std::ostream& log) {
    const Aabb& box = scene.container.box;
    for (const ViewConfig& v : scene.views) {
        bool covered = true;
        for (int corner = 0; corner < 8; ++corner) {
            const Vec3 p((corner & 1) ? box.max.x() : box.min.x(), (corner & 2) ? box.max.y() : box.min.y(),
                         (corner & 4) ? box.max.z() : box.min.z());
            const Vec3 cam = v.rotation * p + v.translation;
            covered = covered && std::abs(cam.x()) <= 0.5 * v.footprint_width + 1e-12 &&
                      std::abs(cam.y()) <= 0.5 * v.footprint_height + 1e-12;
        }
        if (!covered) log << "warning: view '" << v.name << "' footprint does not cover the container\n";
    }
}

// Rebuilds the optimization scene exactly as a run sees it, without targets.
Scene build_scene(const RunConfig& config, const std::vector<Mesh>& objects) {
    const SceneOptions options = scene_options(config);
    if (config.mode == "assemble") {
        return make_assembly_scene(objects, load_mesh(config.whole), options).scene;
    }
    return make_scene(container_input(config), objects, options);
}

void set_run_targets(const RunConfig& config, Scene& scene) {
    if (config.target_mode == "auto-container") {
        set_container_targets(scene);
    } else if (config.target_mode == "strip") {
        set_strip_targets(scene, config.strip_fraction);
    } else {
        if (config.target_paths.size() != scene.views.size()) {
            throw InputError("config field 'targets': " + std::to_string(config.target_paths.size()) +
                             " images for " + std::to_string(scene.views.size()) + " views");
        }
        std::vector<Image> targets;
        for (std::size_t k = 0; k < scene.views.size(); ++k)
            targets.push_back(load_target(config.target_paths[k], scene.views[k].width, scene.views[k].height));
        set_targets(scene, std::move(targets));
    }
}

json pose_json(const RigidPosed& p) {
    return {{"angles_rad", vec_json(p.angles)}, {"translation", vec_json(p.translation)}};
}

int write_artifacts(const RunConfig& config, const json& doc, const fs::path& base_dir, const Scene& scene,
                    const std::vector<fs::path>& sources, const PackResult& result, std::ostream& log) {
    fs::create_directories(config.output);

    std::string csv = "iter,sil,intersect,extrude,total\n";
    for (std::size_t k = 0; k < result.trace.size(); ++k) {
        const LossReport& r = result.trace[k];
        csv += std::to_string(k) + "," + format_double(r.sil) + "," + format_double(r.intersect) + "," +
               format_double(r.extrude) + "," + format_double(r.total) + "\n";
    }
    write_text(config.output / "loss.csv", csv);

    const std::vector<Image> hard = hard_renders(scene, result.poses);
    json views = json::array();
    double iou_sum = 0.0;
    for (std::size_t k = 0; k < scene.views.size(); ++k) {
        const std::string stem = file_stem(scene.views[k], k);
        save_png(config.output / ("render_" + stem + ".png"), result.renders[k]);
        save_png(config.output / ("hard_" + stem + ".png"), hard[k]);
        save_png(config.output / ("target_" + stem + ".png"), scene.targets[k]);
        views.push_back({{"name", scene.views[k].name},
                         {"iou", result.view_iou[k]},
                         {"render", "render_" + stem + ".png"},
                         {"target", "target_" + stem + ".png"}});
        iou_sum += result.view_iou[k];
    }

    json objects = json::array();
    for (std::size_t i = 0; i < result.poses.size(); ++i) {
        objects.push_back({{"id", i},
                           {"name", scene.objects[i].name},
                           {"source", sources[i].string()},
                           {"pose", pose_json(world_pose(scene, i, result.poses[i]))},
                           {"normalized_pose", pose_json(result.poses[i])}});
    }

    const LossReport last = result.trace.empty() ? LossReport{} : result.trace.back();
    json out = {
        {"mode", config.mode},
        {"seed", config.pack.seed},
        {"n_placed", result.n_placed},
        {"n_max_estimate", result.n_max_estimate},
        {"rho", result.rho},
        {"density_flagged", result.density_flagged},
        {"audit",
         {{"passed", result.audit.passed},
          {"max_penetration", result.audit.max_penetration},
          {"overlap_points", result.audit.overlap_points},
          {"container_violations", result.audit.container_violations},
          {"lattice_spacing", result.audit.lattice_spacing},
          {"fine_spacing", result.audit.fine_spacing}}},
        {"objects", objects},
        {"views", views},
        {"mean_iou", scene.views.empty() ? 0.0 : iou_sum / static_cast<double>(scene.views.size())},
        {"uncovered_fraction", result.uncovered_fraction},
        {"iterations_run", result.trace.size()},
        {"final_loss",
         {{"sil", last.sil}, {"intersect", last.intersect}, {"extrude", last.extrude}, {"total", last.total},
          {"lambda", last.lambda}}},
        {"normalization", {{"scale", scene.norm.scale}, {"offset", vec_json(scene.norm.offset)}}},
        {"loss_csv", "loss.csv"},
        {"config_dir", base_dir.string()},
        {"config", doc},
    };
    if (config.export_obj) {
        std::ofstream obj(config.output / "packed.obj");
        if (!obj) throw InputError("cannot write " + (config.output / "packed.obj").string());
        write_obj(obj, placed_meshes(scene, result.poses));
        out["packed_obj"] = "packed.obj";
    }
    write_text(config.output / "result.json", out.dump(2) + "\n");

    log << "placed " << result.n_placed << " objects, rho " << result.rho << ", audit "
        << (result.audit.passed ? "passed" : "FAILED") << " (max penetration " << result.audit.max_penetration
        << ", container violations " << result.audit.container_violations << ")\n";
    log << "wrote " << (config.output / "result.json").string() << "\n";
    return result.audit.passed ? kSuccess : kAuditFailure;
}

PackConfig with_progress(const PackConfig& base, std::ostream& log) {
    PackConfig cfg = base;
    cfg.on_iteration = [&log](int it, const LossReport& r) {
        if (it % 100 == 0)
            log << "iter " << it << " total " << r.total << " sil " << r.sil << " intersect " << r.intersect
                << " extrude " << r.extrude << "\n";
    };
    return cfg;
}

RunConfig config_for(nlohmann::json& doc, const fs::path& base_dir, const std::string& mode) {
    if (!doc.is_object()) throw InputError("config must be a JSON object");
    if (!doc.contains("mode")) doc["mode"] = mode;
    if (doc["mode"] != mode)
        throw InputError("config field 'mode': is \"" + doc["mode"].dump() + "\" but the command is " + mode);
    return parse_run_config(doc, base_dir);
}

}  // namespace

std::vector<Mesh> load_objects(const RunConfig& config) {
    return load_all(config.mode == "assemble" ? config.parts : object_paths(config));
}

SceneOptions scene_options(const RunConfig& config) {
    SceneOptions o;
    o.container_points = config.container_points;
    o.object_grid_dims = config.object_grid_dims;
    o.image_resolution = config.resolution;
    o.footprint_margin = config.footprint_margin;
    o.tau = config.tau;
    if (config.view_preset == "axis") o.preset = ViewPreset::Axis;
    if (config.view_preset == "five") o.preset = ViewPreset::Five;
    if (!config.custom_views.empty()) {
        const Aabb box = world_container_box(config);
        for (const ViewSpec& s : config.custom_views) {
            o.custom_views.push_back(make_view(s.name, s.direction, s.up, s.center.value_or(box.center()),
                                               s.footprint.value_or(config.footprint_margin * box.extents().maxCoeff()),
                                               s.resolution.value_or(config.resolution)));
        }
    }
    return o;
}

int cmd_pack(const nlohmann::json& input, const fs::path& base_dir, std::ostream& log) {
    json doc = input;
    const RunConfig config = config_for(doc, base_dir, "pack");
    const std::vector<fs::path> sources = object_paths(config);
    const std::vector<Mesh> meshes = load_all(sources);
    const PackConfig pack_config = with_progress(config.pack, log);

    if (config.incremental) {
        Scene scene = build_scene(config, {});
        set_run_targets(config, scene);
        warn_uncovered_views(scene, log);
        const PackResult result = incremental_pack(meshes, scene, pack_config);
        return write_artifacts(config, doc, base_dir, scene, sources, result, log);
    }
    Scene scene = build_scene(config, meshes);
    set_run_targets(config, scene);
    warn_uncovered_views(scene, log);
    const PackResult result = pack(scene, pack_config);
    return write_artifacts(config, doc, base_dir, scene, sources, result, log);
}

int cmd_assemble(const nlohmann::json& input, const fs::path& base_dir, std::ostream& log) {
    json doc = input;
    const RunConfig config = config_for(doc, base_dir, "assemble");
    const std::vector<Mesh> parts = load_all(config.parts);
    const AssemblyScene assembly = make_assembly_scene(parts, load_mesh(config.whole), scene_options(config));
    warn_uncovered_views(assembly.scene, log);
    const PackResult result = assemble(assembly, with_progress(config.pack, log));
    double mean = 0.0;
    for (double v : result.view_iou) mean += v;
    log << "mean silhouette IoU " << mean / static_cast<double>(std::max<std::size_t>(1, result.view_iou.size()))
        << "\n";
    return write_artifacts(config, doc, base_dir, assembly.scene, config.parts, result, log);
}

int cmd_bake(const BakeOptions& options, std::ostream& log) {
    const Mesh mesh = load_mesh(options.mesh);
    if (options.dims < 2) throw ParameterError("bake: dims must be at least 2");
    GridSpec spec;
    if (options.box) {
        const Vec3 ext = options.box->extents();
        if (!(ext.array() > 0.0).all()) throw ParameterError("bake: box must have positive extents");
        spec.origin = options.box->min;
        spec.spacing = ext.maxCoeff() / (options.dims - 1);
        for (int a = 0; a < 3; ++a)
            spec.dims[static_cast<std::size_t>(a)] = static_cast<int>(std::lround(ext[a] / spec.spacing)) + 1;
    } else {
        spec = cubic_grid_spec(bounds(mesh), options.dims, 2);
    }
    const SdfGrid grid = bake_sdf(mesh, spec);
    if (!options.output.parent_path().empty()) fs::create_directories(options.output.parent_path());
    save_sdf_grid(options.output, grid);
    log << "baked " << spec.dims[0] << "x" << spec.dims[1] << "x" << spec.dims[2] << " grid, spacing "
        << spec.spacing << " -> " << options.output.string() << "\n";
    return kSuccess;
}

int cmd_render(const RenderOptions& options, std::ostream& log) {
    std::ifstream in(options.result);
    if (!in) throw InputError("cannot open result file " + options.result.string());
    json result;
    try {
        result = json::parse(in);
    } catch (const json::parse_error& e) {
        throw InputError("result " + options.result.string() + " is not valid JSON: " + e.what());
    }
    if (!result.contains("config") || !result.contains("objects") || !result.contains("config_dir"))
        throw InputError("result " + options.result.string() + " lacks config or objects");

    RunConfig config = parse_run_config(result.at("config"), result.at("config_dir").get<std::string>());
    if (!options.view_preset.empty()) {
        if (options.view_preset != "axis" && options.view_preset != "five")
            throw ParameterError("render: views must be axis or five");
        config.view_preset = options.view_preset;
        config.custom_views.clear();
    }

    std::vector<Mesh> meshes;
    std::vector<RigidPosed> poses;
    for (const json& obj : result.at("objects")) {
        meshes.push_back(load_mesh(obj.at("source").get<std::string>()));
        RigidPosed p;
        p.angles = json_vec(obj.at("normalized_pose").at("angles_rad"));
        p.translation = json_vec(obj.at("normalized_pose").at("translation"));
        poses.push_back(p);
    }
    const Scene scene = build_scene(config, meshes);

    std::vector<int> ids = options.objects;
    if (ids.empty()) {
        for (std::size_t i = 0; i < poses.size(); ++i) ids.push_back(static_cast<int>(i));
    }
    std::vector<WarpedField> fields;
    for (int id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= poses.size())
            throw InputError("render: unknown pose id " + std::to_string(id) + " (result has " +
                             std::to_string(poses.size()) + " objects)");
        const SceneObject& o = scene.objects[static_cast<std::size_t>(id)];
        fields.emplace_back(*o.grid, poses[static_cast<std::size_t>(id)], o.support);
    }

    const fs::path out_dir = options.output.empty() ? options.result.parent_path() / "renders" : options.output;
    fs::create_directories(out_dir);
    for (std::size_t k = 0; k < scene.views.size(); ++k) {
        Image img = render_silhouette(fields, scene.views[k], scene.render).image;
        if (options.threshold) img = threshold(img);
        const fs::path path = out_dir / ("render_" + file_stem(scene.views[k], k) + ".png");
        save_png(path, img);
        log << "wrote " << path.string() << "\n";
    }
    return kSuccess;
}

int report_error(const std::exception& e, std::ostream& log) {
    if (dynamic_cast<const InputError*>(&e)) {
        log << "input error: " << e.what() << "\n";
        return kInputError;
    }
    if (dynamic_cast<const nlohmann::json::exception*>(&e)) {
        log << "input error: " << e.what() << "\n";
        return kInputError;
    }
    if (dynamic_cast<const NumericalError*>(&e)) {
        log << "numerical error: " << e.what() << "\n";
        return kNumericalAbort;
    }
    log << "error: " << e.what() << "\n";
    return kInternal;
}

}  // namespace silpack::cli
