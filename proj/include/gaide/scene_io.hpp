#pragma once

#include <fstream>
#include <initializer_list>
#include <set>
#include <string>

#include <json.hpp>

#include "gaide/kinematics.hpp"

namespace gaide {

using json = nlohmann::json;

// Chain + scene pair as stored in a versioned scene document.
struct SceneDocument {
  KinematicChain chain;
  Scene scene;
};

namespace detail {

inline void reject_unknown_fields(const json& obj, std::initializer_list<const char*> allowed,
                                  const std::string& where) {
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : obj.items())
    if (!ok.count(key))
      throw std::invalid_argument("scene document: unknown field \"" + key + "\" in " + where);
}

inline Vec3 vec3_from(const json& a, const std::string& where) {
  if (!a.is_array() || a.size() != 3)
    throw std::invalid_argument("scene document: " + where + " must be a 3-element array");
  return {a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
}

inline json vec3_to(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

}  // namespace detail

inline json scene_document_to_json(const SceneDocument& doc) {
  json j;
  j["version"] = 1;
  json joints = json::array();
  for (const auto& joint : doc.chain.joints) {
    joints.push_back({{"axis", detail::vec3_to(joint.axis)},
                      {"origin", detail::vec3_to(joint.origin)},
                      {"limits", json::array({joint.limits.lower, joint.limits.upper})}});
  }
  json links = json::array();
  for (const auto& link : doc.chain.links) {
    json spheres = json::array();
    for (const auto& s : link.spheres)
      spheres.push_back({{"center", detail::vec3_to(s.center)}, {"radius", s.radius}});
    links.push_back({{"spheres", spheres}});
  }
  j["chain"] = {{"joints", joints}, {"links", links}, {"tip", detail::vec3_to(doc.chain.tip)}};

  json obstacles = json::array();
  for (const auto& obs : doc.scene.obstacles) {
    if (const auto* s = std::get_if<SphereObstacle>(&obs))
      obstacles.push_back({{"type", "sphere"},
                           {"center", detail::vec3_to(s->center)},
                           {"radius", s->radius}});
    else {
      const auto& b = std::get<BoxObstacle>(obs);
      obstacles.push_back(
          {{"type", "box"}, {"min", detail::vec3_to(b.min)}, {"max", detail::vec3_to(b.max)}});
    }
  }
  j["obstacles"] = obstacles;
  j["bounds"] = {{"min", detail::vec3_to(doc.scene.bounds.min)},
                 {"max", detail::vec3_to(doc.scene.bounds.max)}};
  return j;
}

inline SceneDocument scene_document_from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("scene document: root must be an object");
  detail::reject_unknown_fields(j, {"version", "chain", "obstacles", "bounds"}, "root");
  if (!j.contains("version") || !j["version"].is_number_integer() || j["version"].get<int>() != 1)
    throw std::invalid_argument("scene document: missing or unsupported version (expect 1)");
  for (const char* field : {"chain", "obstacles", "bounds"})
    if (!j.contains(field))
      throw std::invalid_argument("scene document: missing field \"" + std::string(field) + "\"");

  SceneDocument doc;
  const json& chain = j["chain"];
  detail::reject_unknown_fields(chain, {"joints", "links", "tip"}, "chain");
  for (const auto& joint_json : chain.at("joints")) {
    detail::reject_unknown_fields(joint_json, {"axis", "origin", "limits"}, "joint");
    Joint joint;
    joint.axis = detail::vec3_from(joint_json.at("axis"), "joint axis");
    joint.origin = detail::vec3_from(joint_json.at("origin"), "joint origin");
    const auto& lim = joint_json.at("limits");
    if (!lim.is_array() || lim.size() != 2)
      throw std::invalid_argument("scene document: joint limits must be [lower, upper]");
    joint.limits = {lim[0].get<double>(), lim[1].get<double>()};
    doc.chain.joints.push_back(joint);
  }
  for (const auto& link_json : chain.at("links")) {
    detail::reject_unknown_fields(link_json, {"spheres"}, "link");
    Link link;
    for (const auto& sphere_json : link_json.at("spheres")) {
      detail::reject_unknown_fields(sphere_json, {"center", "radius"}, "link sphere");
      link.spheres.push_back({detail::vec3_from(sphere_json.at("center"), "sphere center"),
                              sphere_json.at("radius").get<double>()});
    }
    doc.chain.links.push_back(link);
  }
  if (chain.contains("tip")) doc.chain.tip = detail::vec3_from(chain["tip"], "chain tip");

  for (const auto& obs_json : j["obstacles"]) {
    const std::string type = obs_json.at("type").get<std::string>();
    if (type == "sphere") {
      detail::reject_unknown_fields(obs_json, {"type", "center", "radius"}, "sphere obstacle");
      doc.scene.obstacles.push_back(
          SphereObstacle{detail::vec3_from(obs_json.at("center"), "obstacle center"),
                         obs_json.at("radius").get<double>()});
    } else if (type == "box") {
      detail::reject_unknown_fields(obs_json, {"type", "min", "max"}, "box obstacle");
      doc.scene.obstacles.push_back(
          BoxObstacle{detail::vec3_from(obs_json.at("min"), "obstacle min"),
                      detail::vec3_from(obs_json.at("max"), "obstacle max")});
    } else {
      throw std::invalid_argument("scene document: unknown obstacle type \"" + type + "\"");
    }
  }
  detail::reject_unknown_fields(j["bounds"], {"min", "max"}, "bounds");
  doc.scene.bounds = {detail::vec3_from(j["bounds"].at("min"), "bounds min"),
                      detail::vec3_from(j["bounds"].at("max"), "bounds max")};

  doc.chain.validate();
  doc.scene.validate();
  return doc;
}

inline void save_scene_file(const SceneDocument& doc, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write scene file: " + path);
  out << scene_document_to_json(doc).dump(2) << "\n";
}

inline SceneDocument load_scene_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read scene file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("scene document " + path + ": " + e.what());
  }
  return scene_document_from_json(j);
}

// Stable fingerprint of the kinematic description, recorded in dataset
// headers so a dataset cannot silently be replayed against another chain.
inline std::uint64_t chain_hash(const KinematicChain& chain) {
  SceneDocument doc;
  doc.chain = chain;
  doc.scene.bounds = {{0, 0, 0}, {0, 0, 0}};
  const std::string repr = scene_document_to_json(doc)["chain"].dump();
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (unsigned char c : repr) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace gaide
