#include "stratkit/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace stratkit::config {
namespace {

using nlohmann::json;

[[noreturn]] void schema_error(const std::string& msg) { throw Error(ErrorKind::SchemaError, msg); }

std::uint64_t as_unsigned(const json& v, const char* key) {
    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
        schema_error(std::string("'") + key + "' must be a non-negative integer");
    }
    return v.get<std::uint64_t>();
}

double as_double(const json& v, const char* key) {
    if (!v.is_number()) schema_error(std::string("'") + key + "' must be a number");
    return v.get<double>();
}

template <typename T, typename F>
std::vector<T> as_list(const json& v, const char* key, F convert) {
    if (!v.is_array()) schema_error(std::string("'") + key + "' must be an array");
    std::vector<T> out;
    for (const auto& item : v) out.push_back(convert(item));
    return out;
}

std::string as_string(const json& v, const char* key) {
    if (!v.is_string()) schema_error(std::string("'") + key + "' entries must be strings");
    return v.get<std::string>();
}

}  // namespace

bool RunConfig::operator==(const RunConfig& o) const {
    const auto& a = mc;
    const auto& b = o.mc;
    return schema_version == o.schema_version && a.reps == b.reps && a.n_grid == b.n_grid && a.params == b.params &&
           a.models == b.models && a.designs == b.designs && a.estimators == b.estimators &&
           a.master_seed == b.master_seed && a.sigma_override == b.sigma_override && a.level == b.level &&
           a.max_fail_rate == b.max_fail_rate && a.late_theta_draws == b.late_theta_draws &&
           a.late_theta_seed == b.late_theta_seed;
}

RunConfig parse(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        schema_error(std::string("invalid JSON: ") + e.what());
    }
    if (!doc.is_object()) schema_error("configuration must be a JSON object");

    static const std::set<std::string> known{"schema_version", "reps",       "n_grid",         "params",
                                             "models",         "designs",    "estimators",     "master_seed",
                                             "sigma_override", "level",      "max_fail_rate",  "late_theta_draws",
                                             "late_theta_seed"};
    for (const auto& [key, value] : doc.items()) {
        if (!known.count(key)) schema_error("unknown key '" + key + "'");
    }
    if (!doc.contains("schema_version")) schema_error("missing 'schema_version'");

    RunConfig c;
    c.schema_version = static_cast<int>(as_unsigned(doc["schema_version"], "schema_version"));
    if (c.schema_version != kSchemaVersion) {
        schema_error("unsupported schema_version " + std::to_string(c.schema_version));
    }
    auto& mc = c.mc;
    if (doc.contains("reps")) mc.reps = as_unsigned(doc["reps"], "reps");
    if (doc.contains("n_grid")) {
        mc.n_grid = as_list<std::size_t>(doc["n_grid"], "n_grid", [](const json& v) { return as_unsigned(v, "n_grid"); });
    }
    if (doc.contains("params")) {
        mc.params = as_list<simbench::Arm>(doc["params"], "params",
                                           [](const json& v) { return simbench::parse_arm(as_string(v, "params")); });
    }
    if (doc.contains("models")) {
        mc.models = as_list<int>(doc["models"], "models",
                                 [](const json& v) { return static_cast<int>(as_unsigned(v, "models")); });
    }
    if (doc.contains("designs")) {
        mc.designs = as_list<simbench::DesignId>(
            doc["designs"], "designs", [](const json& v) { return simbench::parse_design(as_string(v, "designs")); });
    }
    if (doc.contains("estimators")) {
        mc.estimators = as_list<simbench::EstimatorId>(doc["estimators"], "estimators", [](const json& v) {
            return simbench::parse_estimator(as_string(v, "estimators"));
        });
    }
    if (doc.contains("master_seed")) mc.master_seed = as_unsigned(doc["master_seed"], "master_seed");
    if (doc.contains("sigma_override")) {
        const auto& v = doc["sigma_override"];
        if (v.is_null()) {
            mc.sigma_override.reset();
        } else {
            mc.sigma_override = as_double(v, "sigma_override");
        }
    }
    if (doc.contains("level")) mc.level = as_double(doc["level"], "level");
    if (doc.contains("max_fail_rate")) mc.max_fail_rate = as_double(doc["max_fail_rate"], "max_fail_rate");
    if (doc.contains("late_theta_draws")) mc.late_theta_draws = as_unsigned(doc["late_theta_draws"], "late_theta_draws");
    if (doc.contains("late_theta_seed")) mc.late_theta_seed = as_unsigned(doc["late_theta_seed"], "late_theta_seed");

    simbench::check_config(mc);
    return c;
}

RunConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::InvalidArgument, "cannot open config '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

std::string serialize(const RunConfig& config) {
    const auto& mc = config.mc;
    json doc = json::object();
    doc["schema_version"] = config.schema_version;
    doc["reps"] = mc.reps;
    doc["n_grid"] = mc.n_grid;
    json params = json::array(), designs = json::array(), estimators = json::array();
    for (auto p : mc.params) params.push_back(simbench::to_string(p));
    for (auto d : mc.designs) designs.push_back(simbench::to_string(d));
    for (auto e : mc.estimators) estimators.push_back(simbench::to_string(e));
    doc["params"] = params;
    doc["models"] = mc.models;
    doc["designs"] = designs;
    doc["estimators"] = estimators;
    doc["master_seed"] = mc.master_seed;
    doc["sigma_override"] = mc.sigma_override ? json(*mc.sigma_override) : json(nullptr);
    doc["level"] = mc.level;
    doc["max_fail_rate"] = mc.max_fail_rate;
    doc["late_theta_draws"] = mc.late_theta_draws;
    doc["late_theta_seed"] = mc.late_theta_seed;
    return doc.dump(2) + "\n";
}

}  // namespace stratkit::config
