"""Independent brute-force reference implementations used only by tests.

Everything here recomputes results from raw record fields with plain
loops, deliberately avoiding the library's own caching, counting, and
grouping code paths, so agreement between the two is meaningful.
"""

import math

EARTH_RADIUS_M = 6371000.0


def haversine_m(lat1, lon1, lat2, lon2):
    p1 = math.radians(lat1)
    p2 = math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    a = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(math.sqrt(a))


def rolled_tuple(record, level_index, table):
    """Rollup re-derived straight from a TaxonRecord's raw fields.

    Special labels map to a sentinel carrying their canonical id; taxa map
    to the contiguous name prefix truncated at the requested level index.
    """
    if record.special_kind == "blank":
        return ("#special", "blank", table.blank_label_id)
    if record.special_kind == "unknown":
        return ("#special", "unknown", table.unknown_label_id or record.label_id)
    names = []
    for name in (record.class_name, record.order_name, record.family_name,
                 record.genus_name, record.species_name):
        if name is None:
            break
        names.append(name)
    return tuple(names[: level_index + 1])


def display_name(rolled):
    return rolled[-1]


def rolled_ranking(entries, table, level_index):
    """Deduplicated rolled ranking; unresolvable labels are dropped."""
    ranking = []
    for label, _score in entries:
        if label not in table.records:
            continue
        rolled = rolled_tuple(table.records[label], level_index, table)
        if rolled not in ranking:
            ranking.append(rolled)
    return ranking


def topk_hits(records_by_image, truth, table, k, level_index):
    """Number of truth images whose rolled truth is in the rolled top-k."""
    hits = 0
    for image_id, label_id in truth.items():
        record = records_by_image.get(image_id)
        if record is None:
            continue
        want = rolled_tuple(table.records[label_id], level_index, table)
        if want in rolled_ranking(record.entries, table, level_index)[:k]:
            hits += 1
    return hits


def per_class_counts(records_by_image, truth, table, level_index):
    """(tp, predicted, actual) per rolled display name, via full rescans.

    A true positive requires full rolled identity between the assigned
    top-1 label and the truth, not just an equal display name.
    """
    truth_rolled = {
        image_id: rolled_tuple(table.records[label_id], level_index, table)
        for image_id, label_id in truth.items()
    }
    assigned_rolled = {}
    for image_id in truth:
        record = records_by_image.get(image_id)
        if record is None:
            continue
        top_label = record.entries[0][0]
        if top_label in table.records:
            assigned_rolled[image_id] = rolled_tuple(
                table.records[top_label], level_index, table
            )

    names = {display_name(rolled) for rolled in truth_rolled.values()}
    names.update(display_name(rolled) for rolled in assigned_rolled.values())

    counts = {}
    for name in names:
        tp = predicted = actual = 0
        for image_id in truth:
            truth_name = display_name(truth_rolled[image_id])
            guess = assigned_rolled.get(image_id)
            if guess is not None and display_name(guess) == name:
                predicted += 1
                if guess == truth_rolled[image_id]:
                    tp += 1
            if truth_name == name:
                actual += 1
        counts[name] = (tp, predicted, actual)
    return counts


def skew_curve(counts):
    """(key, count, cumulative fraction) by descending count, key tiebreak."""
    total = sum(counts.values())
    ordered = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    out = []
    running = 0
    for key, count in ordered:
        running += count
        out.append((key, count, running / total))
    return out


def burst_components(images, max_gap_seconds):
    """Union-find closure over every image pair within the gap.

    Quadratic on purpose: any two images of one deployment whose
    timestamps differ by at most the gap must transitively share a group.
    """
    groups = {}
    for image in images:
        groups.setdefault(image.deployment_id, []).append(image)

    components = []
    for dep_id in sorted(groups):
        members = sorted(groups[dep_id], key=lambda im: (im.timestamp, im.image_id))
        parent = list(range(len(members)))

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for i in range(len(members)):
            for j in range(i + 1, len(members)):
                gap = abs((members[i].timestamp - members[j].timestamp).total_seconds())
                if gap <= max_gap_seconds:
                    root_i, root_j = find(i), find(j)
                    if root_i != root_j:
                        parent[root_i] = root_j

        by_root = {}
        for i, image in enumerate(members):
            by_root.setdefault(find(i), []).append(image.image_id)
        components.extend(sorted(by_root.values(), key=lambda ids: ids[0]))
    return components


def point_in_any_box(latitude, longitude, boxes):
    for box in boxes:
        if (box.lat_min <= latitude <= box.lat_max
                and box.lon_min <= longitude <= box.lon_max):
            return True
    return False


def duplicate_count(keys):
    seen = set()
    duplicates = 0
    for key in keys:
        if key in seen:
            duplicates += 1
        seen.add(key)
    return duplicates
