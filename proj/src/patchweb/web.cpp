#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <thread>

#include "pm/patchweb/web.hpp"

namespace pm {

namespace {

constexpr std::uint64_t kSelectStream = 0x5e1;

// Up to `count` distinct uniform picks from `pool` (partial Fisher-Yates).
std::vector<int> sample(std::vector<int> pool, std::size_t count, CounterRng& rng) {
    count = std::min(count, pool.size());
    for (std::size_t i = 0; i < count; ++i) std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
    pool.resize(count);
    return pool;
}

// Bin indexes depend only on the image, so they are built once per image.
using BinCache = std::map<int, std::shared_ptr<const BinIndex>>;

WebMember load_member(const std::filesystem::path& dir, const Manifest& manifest, int index, const RelaxOptions& opts,
                      bool writable, BinCache& cache) {
    WebMember m;
    m.index = index;
    m.image = load_web_image(manifest[std::size_t(index)].path);
    if (m.image.width() != manifest[std::size_t(index)].width || m.image.height() != manifest[std::size_t(index)].height)
        throw InputError("collection image changed since the manifest was written: " + manifest[std::size_t(index)].path);
    m.field = load_web_nnf(dir, index);
    m.writable = writable;
    if (opts.operators & kOpBinning) {
        auto it = cache.find(index);
        if (it == cache.end()) {
            std::shared_ptr<const BinIndex> bins;
            try {
                bins = std::make_shared<const BinIndex>(build_bin_index(m.image, m.field.geom(), opts.bins));
            } catch (const InvalidArgument&) {
                // Too few patches for a projection; this member is simply not binned.
            }
            it = cache.emplace(index, std::move(bins)).first;
        }
        m.bins = it->second;
    }
    return m;
}

}  // namespace

std::vector<int> select_working_set(int collection_size, const std::vector<int>& previous,
                                    const std::vector<const WebNnf*>& previous_fields, const WorkingSetPolicy& policy,
                                    int capacity, CounterRng& rng, int query) {
    if (capacity < 2) throw InvalidArgument("working-set capacity must be >= 2");
    if (policy.keep < 0 || policy.fresh < 0 || policy.enrich < 0) throw InvalidArgument("negative policy fraction");
    const int cap = std::min(capacity, collection_size);
    std::vector<char> chosen(std::size_t(collection_size), 0);
    std::vector<int> out;
    auto take = [&](int i) {
        if (i < 0 || i >= collection_size || chosen[std::size_t(i)] || int(out.size()) >= cap) return;
        chosen[std::size_t(i)] = 1;
        out.push_back(i);
    };
    if (query >= 0) take(query);

    const double total = policy.keep + policy.fresh + policy.enrich;
    const double scale = total > 0 ? 1.0 / total : 0.0;
    const auto n_keep = std::size_t(std::lround(policy.keep * scale * cap));
    const auto n_enrich = std::size_t(std::lround(policy.enrich * scale * cap));

    std::vector<int> kept;
    if (!previous.empty()) {
        std::vector<std::size_t> order(previous.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        for (std::size_t i = 0; i < order.size(); ++i) std::swap(order[i], order[i + rng.below(order.size() - i)]);
        for (std::size_t i = 0; i < order.size() && kept.size() < n_keep; ++i) {
            const int idx = previous[order[i]];
            if (idx < 0 || idx >= collection_size) continue;
            take(idx);
            kept.push_back(int(order[i]));
        }
        // Images most targeted by the kept members' fields.
        std::map<int, std::size_t> votes;
        for (const int k : kept) {
            const WebNnf* f = k < int(previous_fields.size()) ? previous_fields[std::size_t(k)] : nullptr;
            if (!f) continue;
            for (const auto w : f->words())
                if (w != kWebSentinel) ++votes[unpack_web_entry(w).image];
        }
        std::vector<std::pair<std::size_t, int>> ranked;
        for (const auto& [img, n] : votes)
            if (img < collection_size && !chosen[std::size_t(img)]) ranked.push_back({n, img});
        std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
            return a.first != b.first ? a.first > b.first : a.second < b.second;
        });
        for (std::size_t i = 0; i < ranked.size() && i < n_enrich; ++i) take(ranked[i].second);
    }

    std::vector<int> pool;
    for (int i = 0; i < collection_size; ++i)
        if (!chosen[std::size_t(i)]) pool.push_back(i);
    for (const int i : sample(pool, std::size_t(cap) - std::min(std::size_t(cap), out.size()), rng)) take(i);
    std::sort(out.begin(), out.end());
    return out;
}

void build_web(const std::filesystem::path& dir, const Manifest& manifest, const WebBuildOptions& opts) {
    if (manifest.size() < 2) throw InvalidArgument("a web needs at least two images");
    if (manifest.size() > std::size_t(kWebImageMax) + 1) throw InputError("collection exceeds 65536 images");
    if (opts.rounds < 0) throw InvalidArgument("rounds must be >= 0");
    const PatchGeometry geom(opts.patch);
    for (const auto& e : manifest) {
        if (e.width > kWebCoordMax + 1 || e.height > kWebCoordMax + 1)
            throw InputError(e.path + ": images larger than 4096 px per side are not supported");
        if (geom.valid_rect(e.width, e.height).empty()) throw InputError(e.path + ": image smaller than the patch");
    }
    std::filesystem::create_directories(dir);
    write_manifest(web_manifest_path(dir), manifest);
    for (std::size_t i = 0; i < manifest.size(); ++i) {
        if (std::filesystem::exists(web_field_path(dir, int(i)))) continue;
        WebNnf empty(int(i), {manifest[i].width, manifest[i].height}, geom);
        save_web_nnf(dir, empty);
    }

    const int n = int(manifest.size());
    std::vector<int> previous;
    std::vector<WebNnf> previous_fields;
    BinCache cache;
    double elapsed = 0.0;
    for (int round = 0; round < opts.rounds; ++round) {
        const auto t0 = std::chrono::steady_clock::now();
        CounterRng rng(opts.relax.seed, kSelectStream, std::uint64_t(round));
        std::vector<const WebNnf*> fields;
        for (const auto& f : previous_fields) fields.push_back(&f);
        const std::vector<int> members = select_working_set(n, previous, fields, opts.policy, opts.capacity, rng);

        WorkingSet ws;
        for (const int i : members) ws.members.push_back(load_member(dir, manifest, i, opts.relax, true, cache));
        relax(ws, opts.relax, round);
        previous = members;
        previous_fields.clear();
        for (auto& m : ws.members) {
            save_web_nnf(dir, m.field);
            previous_fields.push_back(std::move(m.field));
        }
        elapsed += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (opts.on_round) opts.on_round(round, elapsed);
    }
}

double web_mean_distance(const std::filesystem::path& dir, const Manifest& manifest) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < manifest.size(); ++i) {
        const WebNnf f = load_web_nnf(dir, int(i));
        sum += f.mean_distance() * double(f.size());
        count += f.size();
    }
    return count ? sum / double(count) : 0.0;
}

WebNnf query_web(const std::filesystem::path& dir, const ImageBuffer& query_in, const WebQueryOptions& opts) {
    if (query_in.width() > kWebCoordMax + 1 || query_in.height() > kWebCoordMax + 1)
        throw InvalidArgument("query images larger than 4096 px per side are not supported");
    if (opts.workers < 1) throw InvalidArgument("workers must be >= 1");
    const Manifest manifest = read_manifest(web_manifest_path(dir));
    if (manifest.empty()) throw InputError("empty web");
    const int n = int(manifest.size());
    const PatchGeometry geom = load_web_nnf(dir, 0).geom();

    ImageBuffer query = query_in;
    if (query.channels() != 3) {
        ImageBuffer rgb(query.width(), query.height(), 3);
        for (int y = 0; y < query.height(); ++y)
            for (int x = 0; x < query.width(); ++x)
                for (int c = 0; c < 3; ++c) rgb.at(x, y, c) = query.at(x, y, query.channels() < 3 ? 0 : c);
        query = std::move(rgb);
    }
    if (geom.valid_rect(query).empty()) throw InvalidArgument("query image smaller than the patch");

    auto run_worker = [&](int worker) {
        RelaxOptions ro = opts.relax;
        ro.seed = opts.relax.seed + std::uint64_t(worker) * 0x9e3779b97f4a7c15ULL;
        WebMember self;
        self.index = n;
        self.image = query;
        self.field = WebNnf(n, query.extent(), geom);
        std::vector<int> previous;
        std::vector<WebNnf> previous_fields;
        BinCache cache;
        for (int round = 0; round < opts.rounds; ++round) {
            CounterRng rng(ro.seed, kSelectStream, std::uint64_t(round));
            std::vector<const WebNnf*> fields;
            for (const auto& f : previous_fields) fields.push_back(&f);
            // The query takes index n in an (n + 1)-image collection.
            const std::vector<int> members = select_working_set(n + 1, previous, fields, opts.policy,
                                                                std::max(2, opts.capacity), rng, n);
            WorkingSet ws;
            ws.members.push_back(std::move(self));
            for (const int i : members)
                if (i != n) ws.members.push_back(load_member(dir, manifest, i, ro, false, cache));
            relax(ws, ro, round);
            self = std::move(ws.members.front());
            previous = members;
            previous_fields.clear();
            for (const int i : members) previous_fields.push_back(i == n ? self.field : ws.find(i)->field);
        }
        return std::move(self.field);
    };

    if (opts.workers == 1) return run_worker(0);
    std::vector<WebNnf> results(std::size_t(opts.workers));
    std::vector<std::exception_ptr> errors(std::size_t(opts.workers));
    {
        std::vector<std::jthread> threads;
        for (int w = 0; w < opts.workers; ++w)
            threads.emplace_back([&, w] {
                try {
                    results[std::size_t(w)] = run_worker(w);
                } catch (...) {
                    errors[std::size_t(w)] = std::current_exception();
                }
            });
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    WebNnf merged = std::move(results[0]);
    for (std::size_t w = 1; w < results.size(); ++w) merged.merge_min(results[w]);
    return merged;
}

double coincidence_probability(int n, int m) {
    if (m < 2) throw InvalidArgument("working-set size must be >= 2");
    if (m > n) throw InvalidArgument("working-set size exceeds the collection size");
    return double(m) * (m - 1) / (double(n) * (n - 1));
}

}  // namespace pm
