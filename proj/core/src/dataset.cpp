#include "dsgate/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "dsgate/tensor_io.hpp"

namespace dsgate {

const char* scene_class_name(SceneClass c) {
    switch (c) {
        case SceneClass::background: return "background";
        case SceneClass::small: return "small";
        case SceneClass::large: return "large";
        case SceneClass::mixed: return "mixed";
    }
    return "?";
}

namespace {

constexpr std::int64_t N = kSceneSize;
// Skirt width of the soft disk. Wide enough that the disk dominates the image
// mean, which is what separates the large class from the sparse one in the
// (mu, d) plane.
constexpr double kSkirt = 16.0;

void add_blob(Tensor4& img, std::mt19937_64& rng) {
    std::uniform_int_distribution<std::int64_t> pos(0, N - 2);
    std::uniform_real_distribution<double> amp(0.9, 1.0);
    const std::int64_t y0 = pos(rng);
    const std::int64_t x0 = pos(rng);
    const double a = amp(rng);
    for (std::int64_t dy = 0; dy < 2; ++dy)
        for (std::int64_t dx = 0; dx < 2; ++dx) img.at(0, 0, y0 + dy, x0 + dx) += a;
}

void add_disk(Tensor4& img, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> jitter(-2.0, 2.0);
    std::uniform_real_distribution<double> radius(8.0, 12.0);
    std::uniform_real_distribution<double> amp(0.4, 0.6);
    const double cy = (N - 1) / 2.0 + jitter(rng);
    const double cx = (N - 1) / 2.0 + jitter(rng);
    const double r0 = radius(rng);
    const double a = amp(rng);
    for (std::int64_t y = 0; y < N; ++y)
        for (std::int64_t x = 0; x < N; ++x) {
            const double r = std::hypot(y - cy, x - cx);
            double v = 0.0;
            if (r <= r0) {
                v = a;
            } else if (r < r0 + kSkirt) {
                v = a * 0.5 * (1.0 + std::cos(M_PI * (r - r0) / kSkirt));
            }
            img.at(0, 0, y, x) += v;
        }
}

}  // namespace

std::vector<SceneSample> gen_dataset(std::uint64_t seed, int count) {
    if (count < 4) throw ConfigError("gen_dataset: count must be >= 4");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> noise(0.0, 0.1);
    std::uniform_int_distribution<int> blob_count(1, 3);

    std::vector<SceneSample> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        const auto label = static_cast<SceneClass>(i % 4);
        Tensor4 img({1, 1, N, N}, 0.0);
        for (std::int64_t p = 0; p < N * N; ++p) img[static_cast<std::size_t>(p)] = noise(rng);
        switch (label) {
            case SceneClass::background: break;
            case SceneClass::small: {
                const int k = blob_count(rng);
                for (int b = 0; b < k; ++b) add_blob(img, rng);
                break;
            }
            case SceneClass::large: add_disk(img, rng); break;
            case SceneClass::mixed:
                add_blob(img, rng);
                add_disk(img, rng);
                break;
        }
        for (std::size_t p = 0; p < img.size(); ++p) img[p] = std::clamp(img[p], 0.0, 1.0);
        out.push_back({std::move(img), label});
    }
    return out;
}

void save_dataset(const std::filesystem::path& dir, const std::vector<SceneSample>& samples) {
    std::filesystem::create_directories(dir);
    std::ofstream labels(dir / "labels.csv", std::ios::trunc);
    if (!labels) throw FormatError((dir / "labels.csv").string() + ": cannot open for writing");
    labels << "index,label\n";
    char name[32];
    for (std::size_t i = 0; i < samples.size(); ++i) {
        std::snprintf(name, sizeof(name), "sample_%05zu.dst", i);
        save_tensor(samples[i].image, dir / name);
        labels << i << "," << static_cast<int>(samples[i].label) << "\n";
    }
}

std::vector<SceneSample> load_dataset(const std::filesystem::path& dir) {
    const auto labels_path = dir / "labels.csv";
    std::ifstream labels(labels_path);
    if (!labels) throw FormatError(labels_path.string() + ": cannot open for reading");
    std::string line;
    if (!std::getline(labels, line) || line != "index,label") {
        throw FormatError(labels_path.string() + ": expected header 'index,label'");
    }
    std::vector<SceneSample> out;
    char name[32];
    while (std::getline(labels, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) {
            throw FormatError(labels_path.string() + ": malformed row '" + line + "'");
        }
        const std::size_t index = std::stoul(line.substr(0, comma));
        const int label = std::stoi(line.substr(comma + 1));
        if (label < 0 || label > 3) {
            throw FormatError(labels_path.string() + ": label " + std::to_string(label) +
                              " outside [0,3]");
        }
        std::snprintf(name, sizeof(name), "sample_%05zu.dst", index);
        out.push_back({load_tensor(dir / name), static_cast<SceneClass>(label)});
    }
    return out;
}

}  // namespace dsgate
