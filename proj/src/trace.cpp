#include "ssev/trace.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

namespace ssev::trace {

using json = nlohmann::ordered_json;

namespace {

// JSON has no infinities; unbounded SCA limits are clamped to sentinels.
double json_safe(double v) { return std::clamp(v, -1e30, 1e30); }

json vehicle_json(const sim::VehicleState& v) {
  return json{{"s", v.s}, {"d", v.d}, {"v_s", v.v_s}, {"v_d", v.v_d}, {"heading", v.heading}};
}

sim::VehicleState vehicle_from(const json& j) {
  sim::VehicleState v;
  v.s = j.at("s").get<double>();
  v.d = j.at("d").get<double>();
  v.v_s = j.at("v_s").get<double>();
  v.v_d = j.at("v_d").get<double>();
  v.heading = j.at("heading").get<double>();
  return v;
}

}  // namespace

void write_trace_jsonl(const std::string& path, const EpisodeTrace& steps) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_trace_jsonl: cannot open " + path);
  for (const TraceStep& st : steps) {
    json rec;
    rec["t"] = st.t;
    rec["ego"] = vehicle_json(st.ego);
    json traffic = json::array();
    for (const auto& [id, v] : st.traffic) {
      json tv = vehicle_json(v);
      tv["id"] = id;
      traffic.push_back(tv);
    }
    rec["traffic"] = traffic;
    json peds = json::array();
    for (const auto& p : st.pedestrians)
      peds.push_back(json{{"s", p.s}, {"d", p.d}, {"v_d", p.v_d}, {"active", p.active}});
    rec["pedestrians"] = peds;
    rec["collision"] = st.collision;
    rec["action"] = json{{"d_fn", st.action.d_fn}, {"a_x", st.action.a_x}};
    rec["reward"] = st.reward;
    if (st.shield) {
      rec["shield"] = json{{"gamma", st.shield->gamma},
                           {"lateral_overridden", st.shield->lateral_overridden},
                           {"longitudinal_overridden", st.shield->longitudinal_overridden},
                           {"a_safe_pre", json_safe(st.shield->a_safe_pre)},
                           {"a_safe_follow", json_safe(st.shield->a_safe_follow)},
                           {"t_c_used", st.shield->t_c_used},
                           {"binding_pre", st.shield->binding_pre},
                           {"binding_follow", st.shield->binding_follow}};
    }
    os << rec.dump() << "\n";
  }
}

EpisodeTrace read_trace_jsonl(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("read_trace_jsonl: cannot open " + path);
  EpisodeTrace steps;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const json rec = json::parse(line);
    TraceStep st;
    st.t = rec.at("t").get<double>();
    st.ego = vehicle_from(rec.at("ego"));
    for (const auto& tv : rec.at("traffic"))
      st.traffic.emplace_back(tv.at("id").get<int>(), vehicle_from(tv));
    for (const auto& pj : rec.at("pedestrians")) {
      sim::PedestrianState p;
      p.s = pj.at("s").get<double>();
      p.d = pj.at("d").get<double>();
      p.v_d = pj.at("v_d").get<double>();
      p.active = pj.at("active").get<bool>();
      st.pedestrians.push_back(p);
    }
    st.collision = rec.at("collision").get<bool>();
    if (rec.contains("action")) {
      st.action.d_fn = rec["action"].at("d_fn").get<double>();
      st.action.a_x = rec["action"].at("a_x").get<double>();
    }
    if (rec.contains("reward")) st.reward = rec["reward"].get<double>();
    if (rec.contains("shield")) {
      ShieldLog sl;
      const auto& sj = rec["shield"];
      sl.gamma = sj.at("gamma").get<bool>();
      sl.lateral_overridden = sj.at("lateral_overridden").get<bool>();
      sl.longitudinal_overridden = sj.at("longitudinal_overridden").get<bool>();
      sl.a_safe_pre = sj.at("a_safe_pre").get<double>();
      sl.a_safe_follow = sj.at("a_safe_follow").get<double>();
      sl.t_c_used = sj.at("t_c_used").get<double>();
      sl.binding_pre = sj.at("binding_pre").get<int>();
      sl.binding_follow = sj.at("binding_follow").get<int>();
      st.shield = sl;
    }
    steps.push_back(std::move(st));
  }
  return steps;
}

void write_trace_svg(const std::string& path, const EpisodeTrace& steps) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_trace_svg: cannot open " + path);
  if (steps.empty()) {
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"10\" height=\"10\"/>\n";
    return;
  }

  double s_min = steps.front().ego.s, s_max = steps.front().ego.s;
  double t_max = steps.back().t;
  for (const TraceStep& st : steps) {
    s_min = std::min(s_min, st.ego.s);
    s_max = std::max(s_max, st.ego.s);
    for (const auto& [id, v] : st.traffic) {
      s_min = std::min(s_min, v.s);
      s_max = std::max(s_max, v.s);
    }
  }
  const double width = 900.0, height = 500.0, margin = 40.0;
  const double sx = (width - 2 * margin) / std::max(t_max, 1e-9);
  const double sy = (height - 2 * margin) / std::max(s_max - s_min, 1e-9);
  auto px = [&](double t) { return margin + t * sx; };
  auto py = [&](double s) { return height - margin - (s - s_min) * sy; };

  static const char* kPalette[] = {"#4363d8", "#f58231", "#3cb44b", "#911eb4", "#46f0f0",
                                   "#f032e6", "#bcf60c", "#fabebe", "#008080", "#e6beff"};
  char buf[256];
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
     << height << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (const TraceStep& st : steps) {
    for (const auto& [id, v] : st.traffic) {
      const char* color = kPalette[static_cast<size_t>(id) % 10];
      std::snprintf(buf, sizeof(buf),
                    "<rect x=\"%.2f\" y=\"%.2f\" width=\"1.6\" height=\"%.2f\" fill=\"%s\" "
                    "fill-opacity=\"0.5\"/>\n",
                    px(st.t) - 0.8, py(v.s + v.half_length), 2.0 * v.half_length * sy, color);
      os << buf;
    }
    std::snprintf(buf, sizeof(buf),
                  "<rect x=\"%.2f\" y=\"%.2f\" width=\"1.6\" height=\"%.2f\" fill=\"%s\"/>\n",
                  px(st.t) - 0.8, py(st.ego.s + st.ego.half_length),
                  2.0 * st.ego.half_length * sy, st.collision ? "#e6194b" : "#000000");
    os << buf;
  }
  std::snprintf(buf, sizeof(buf),
                "<text x=\"%.1f\" y=\"%.1f\" font-size=\"12\">t (s)</text>\n", width / 2,
                height - 8.0);
  os << buf;
  std::snprintf(buf, sizeof(buf),
                "<text x=\"8\" y=\"%.1f\" font-size=\"12\" transform=\"rotate(-90 12 %.1f)\">"
                "s (m)</text>\n",
                height / 2, height / 2);
  os << buf;
  os << "</svg>\n";
}

}  // namespace ssev::trace
