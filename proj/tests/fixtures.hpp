#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "icc/activation_store.hpp"
#include "icc/numeric.hpp"

namespace fixture {

// Random hierarchical dataset: `subclasses` per superclass, `per_sub` samples
// each, one dense layer per entry of `widths`. Values get a per-subclass offset
// so the measures see some structure.
inline icc::store::ActivationDataset random_dataset(std::uint64_t seed, int superclasses, int subclasses, int per_sub,
                                                    const std::vector<std::size_t>& widths) {
    icc::Rng rng(seed);
    std::vector<int> sub_of, super_of;
    for (int s = 0; s < superclasses * subclasses; ++s) super_of.push_back(s / subclasses);
    for (int s = 0; s < superclasses * subclasses; ++s)
        for (int k = 0; k < per_sub; ++k) sub_of.push_back(s);
    const std::size_t n = sub_of.size();
    std::vector<icc::store::LayerBlock> layers;
    for (std::size_t l = 0; l < widths.size(); ++l) {
        icc::store::LayerBlock b;
        b.name = "layer" + std::to_string(l);
        b.layer_index = static_cast<int>(l);
        b.preacts = icc::Matrix(n, widths[l]);
        std::vector<double> offsets(static_cast<std::size_t>(superclasses * subclasses) * widths[l]);
        for (double& o : offsets) o = rng.normal();
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < widths[l]; ++c)
                b.preacts(r, c) = offsets[static_cast<std::size_t>(sub_of[r]) * widths[l] + c] + 0.7 * rng.normal();
        layers.push_back(std::move(b));
    }
    return icc::store::assemble("random", std::move(layers), icc::store::hierarchical_labels(sub_of, super_of));
}

class TempDir {
public:
    explicit TempDir(const std::string& name) {
        path_ = std::filesystem::temp_directory_path() /
                ("icc_test_" + name + "_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

private:
    std::filesystem::path path_;
};

}  // namespace fixture
