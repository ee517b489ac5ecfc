#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "silpack/packer.hpp"

namespace silpack::cli {

enum ExitCode : int { kSuccess = 0, kInternal = 1, kInputError = 2, kAuditFailure = 3, kNumericalAbort = 4 };

struct ViewSpec {
    std::string name;
    Vec3 direction = Vec3::UnitX();
    Vec3 up = Vec3::UnitZ();
    std::optional<Vec3> center;  // default: container centre
    std::optional<double> footprint;  // default: margin * container max extent
    std::optional<int> resolution;
};

// Parsed and validated run description. Relative paths are resolved against
// the directory of the config file.
struct RunConfig {
    std::string mode = "pack";  // pack | assemble

    std::vector<std::filesystem::path> objects;
    std::optional<std::filesystem::path> pool_dir;

    std::optional<std::filesystem::path> container_mesh;
    Vec3 container_box = Vec3::Zero();
    Vec3 container_center = Vec3::Zero();

    std::vector<std::filesystem::path> parts;
    std::filesystem::path whole;

    std::string view_preset;  // axis | five | empty for the default
    int resolution = 64;
    double footprint_margin = 1.2;
    std::vector<ViewSpec> custom_views;

    // "auto-container", "strip:<f>" or one PNG per view
    std::string target_mode = "auto-container";
    double strip_fraction = 1.0;
    std::vector<std::filesystem::path> target_paths;

    PackConfig pack;
    std::size_t container_points = 80000;
    int object_grid_dims = 64;
    std::optional<double> tau;
    bool incremental = false;

    std::filesystem::path output = "out";
    bool export_obj = true;
};

// Throws InputError naming the offending field.
RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir);
nlohmann::json load_config_json(const std::filesystem::path& path);

// Sets a dotted key ("loss.lambda", "iterations") to `value`, parsed as JSON
// when possible and as a string otherwise.
void apply_override(nlohmann::json& doc, const std::string& key, const std::string& value);

std::vector<Mesh> load_objects(const RunConfig& config);
SceneOptions scene_options(const RunConfig& config);

// Runs a pack or assemble job and writes result.json, loss.csv, per-view
// PNGs and optionally packed.obj under config.output.
int cmd_pack(const nlohmann::json& doc, const std::filesystem::path& base_dir, std::ostream& log);
int cmd_assemble(const nlohmann::json& doc, const std::filesystem::path& base_dir, std::ostream& log);

struct BakeOptions {
    std::filesystem::path mesh;
    std::filesystem::path output;
    int dims = 64;
    // explicit lattice box (min, max); default: mesh bounds plus two cells
    std::optional<Aabb> box;
};
int cmd_bake(const BakeOptions& options, std::ostream& log);

struct RenderOptions {
    std::filesystem::path result;
    std::filesystem::path output;
    std::vector<int> objects;  // empty: all
    std::string view_preset;  // empty: the run's own views
    bool threshold = false;
};
int cmd_render(const RenderOptions& options, std::ostream& log);

// Maps a caught exception to its exit code and prints it.
int report_error(const std::exception& e, std::ostream& log);

}  // namespace silpack::cli
