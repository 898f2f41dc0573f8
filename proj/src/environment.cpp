#include "semap/environment.hpp"

#include <algorithm>
#include <bit>
#include <fstream>

#include "semap/errors.hpp"
#include "semap/rng.hpp"

namespace semap {

void EnvironmentSpec::validate() const {
  config.validate();
  auto check_class = [&](int c, const char* what) {
    if (c < 0 || c > config.num_classes) throw InvalidInput(std::string("environment: ") + what + " out of range");
  };
  check_class(ground_class, "ground_class");
  check_class(road_class, "road_class");
  for (int c : box_classes) {
    check_class(c, "box class");
    if (c == 0) throw InvalidInput("environment: boxes cannot be free space");
  }
  if (num_boxes < 0 || max_retries < 1) throw InvalidInput("environment: bad box counts");
  if (num_boxes > 0 && box_classes.empty()) throw InvalidInput("environment: boxes need at least one class");
  for (int a = 0; a < 3; ++a) {
    if (box_min[a] < 1 || box_max[a] < box_min[a]) throw InvalidInput("environment: bad box extents");
  }
  if (road_spacing < 0 || (road_spacing > 0 && (road_width < 1 || road_width > road_spacing))) {
    throw InvalidInput("environment: bad road layout");
  }
  if (!class_names.empty() && class_names.size() != static_cast<std::size_t>(config.classes())) {
    throw InvalidInput("environment: need C+1 class names");
  }
}

std::vector<std::pair<int, int>> EnvironmentSpec::road_rows() const {
  std::vector<std::pair<int, int>> rows;
  if (road_spacing <= 0 || road_class == 0) return rows;
  const int n = config.cells_per_axis();
  for (int start = road_spacing / 2 - road_width / 2; start < n; start += road_spacing) {
    rows.emplace_back(std::max(start, 0), std::min(start + road_width, n));
  }
  return rows;
}

std::uint64_t Environment::count(ClassId c) const {
  return static_cast<std::uint64_t>(std::count(labels.begin(), labels.end(), static_cast<std::uint8_t>(c.value)));
}

std::vector<std::string> default_class_names(int num_classes) {
  static const std::vector<std::string> known{"free", "terrain", "road", "building", "car", "vegetation"};
  std::vector<std::string> names;
  for (int c = 0; c <= num_classes; ++c) {
    names.push_back(c < static_cast<int>(known.size()) ? known[static_cast<std::size_t>(c)] : "class" + std::to_string(c));
  }
  return names;
}

GeneratedEnvironment generate_environment(const EnvironmentSpec& spec, std::uint64_t seed) {
  spec.validate();
  const MapConfig& cfg = spec.config;
  const int n = cfg.cells_per_axis();
  GeneratedEnvironment out;
  Environment& env = out.environment;
  env.config = cfg;
  env.class_names = spec.class_names.empty() ? default_class_names(cfg.num_classes) : spec.class_names;
  env.labels.assign(cfg.num_cells(), 0);

  const auto roads = spec.road_rows();
  auto on_road = [&](int y) {
    return std::any_of(roads.begin(), roads.end(), [y](auto r) { return y >= r.first && y < r.second; });
  };
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x)
      env.labels[cfg.linear_index({x, y, 0})] = static_cast<std::uint8_t>(on_road(y) ? spec.road_class : spec.ground_class);

  CounterRng rng(seed, CounterRng::stream_id(0, 0, 0));
  auto draw = [&rng](int lo, int hi) { return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1))); };
  for (int b = 0; b < spec.num_boxes; ++b) {
    bool placed = false;
    for (int attempt = 0; attempt < spec.max_retries && !placed; ++attempt) {
      const int sx = draw(spec.box_min.ix, spec.box_max.ix);
      const int sy = draw(spec.box_min.iy, spec.box_max.iy);
      const int sz = draw(spec.box_min.iz, spec.box_max.iz);
      const int label = spec.box_classes[rng.below(spec.box_classes.size())];
      if (sx > n || sy > n || sz > n - 1) continue;
      const int x0 = draw(0, n - sx);
      const int y0 = draw(0, n - sy);
      const PlacedBox box{{x0, y0, 1}, {x0 + sx, y0 + sy, 1 + sz}, ClassId(label)};
      bool clear = true;
      for (int y = box.lo.iy; y < box.hi.iy && clear; ++y) clear = !on_road(y);
      for (const PlacedBox& other : out.boxes) {
        const bool disjoint = box.hi.ix <= other.lo.ix || other.hi.ix <= box.lo.ix || box.hi.iy <= other.lo.iy ||
                              other.hi.iy <= box.lo.iy || box.hi.iz <= other.lo.iz || other.hi.iz <= box.lo.iz;
        if (!disjoint) clear = false;
      }
      if (!clear) continue;
      for (int z = box.lo.iz; z < box.hi.iz; ++z)
        for (int y = box.lo.iy; y < box.hi.iy; ++y)
          for (int x = box.lo.ix; x < box.hi.ix; ++x)
            env.labels[cfg.linear_index({x, y, z})] = static_cast<std::uint8_t>(label);
      out.boxes.push_back(box);
      placed = true;
    }
    if (!placed) {
      throw GenerationError("environment: could not place box " + std::to_string(b) + " after " +
                            std::to_string(spec.max_retries) + " attempts");
    }
  }
  return out;
}

namespace {

constexpr char kEnvMagic[4] = {'S', 'O', 'E', '1'};

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw InvalidInput("environment file: truncated");
  return v;
}

}  // namespace

// Layout: "SOE1" | C:u8 | depth:u8 | origin:3 x f64 | cell_size:f64 |
// names:u32 count then (u16 length, bytes) each | labels: 8^depth bytes.
void save_environment(const Environment& env, const std::filesystem::path& path) {
  static_assert(std::endian::native == std::endian::little);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InvalidInput("cannot open " + path.string() + " for writing");
  os.write(kEnvMagic, 4);
  put<std::uint8_t>(os, static_cast<std::uint8_t>(env.config.num_classes));
  put<std::uint8_t>(os, static_cast<std::uint8_t>(env.config.depth));
  put(os, env.config.origin.x);
  put(os, env.config.origin.y);
  put(os, env.config.origin.z);
  put(os, env.config.cell_size);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(env.class_names.size()));
  for (const std::string& name : env.class_names) {
    put<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
  }
  os.write(reinterpret_cast<const char*>(env.labels.data()), static_cast<std::streamsize>(env.labels.size()));
  if (!os) throw InvalidInput("failed writing " + path.string());
}

Environment load_environment(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InvalidInput("cannot open " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || !std::equal(magic, magic + 4, kEnvMagic)) throw InvalidInput("environment file: bad magic");
  Environment env;
  env.config.num_classes = get<std::uint8_t>(is);
  env.config.depth = get<std::uint8_t>(is);
  env.config.origin.x = get<double>(is);
  env.config.origin.y = get<double>(is);
  env.config.origin.z = get<double>(is);
  env.config.cell_size = get<double>(is);
  env.config.validate();
  const auto names = get<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < names; ++i) {
    const auto len = get<std::uint16_t>(is);
    std::string name(len, '\0');
    is.read(name.data(), len);
    env.class_names.push_back(std::move(name));
  }
  env.labels.resize(env.config.num_cells());
  is.read(reinterpret_cast<char*>(env.labels.data()), static_cast<std::streamsize>(env.labels.size()));
  if (!is) throw InvalidInput("environment file: truncated labels");
  for (std::uint8_t l : env.labels) {
    if (l > env.config.num_classes) throw InvalidInput("environment file: label out of range");
  }
  return env;
}

}  // namespace semap
