#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace cogsense {

struct GenerationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Panels: small discrete attribute grids standing in for images.
// ---------------------------------------------------------------------------

// Attribute ranges shared by all generators. Small enough to enumerate,
// large enough for non-degenerate rules.
struct AttributeSpace {
    int shapes = 4;
    int colors = 4;
    int sizes = 4;
};

struct Cell {
    int shape = 0;
    int color = 0;
    int size = 0;
    bool present = false;

    bool operator==(const Cell&) const = default;
};

struct Panel {
    int width = 0;
    int height = 0;
    std::vector<Cell> cells;  // row-major, height*width entries

    Panel() = default;
    Panel(int w, int h) : width(w), height(h), cells(static_cast<size_t>(w) * h) {
        if (w <= 0 || h <= 0 || w > 8 || h > 8) {
            throw GenerationError("Panel: dimensions must be within 1..8");
        }
    }

    Cell& at(int r, int c) { return cells[static_cast<size_t>(r) * width + c]; }
    const Cell& at(int r, int c) const { return cells[static_cast<size_t>(r) * width + c]; }

    int count_present() const {
        int n = 0;
        for (const Cell& cell : cells) n += cell.present ? 1 : 0;
        return n;
    }

    // Absent cells are normalized to zeroed attributes so panel equality
    // and serialization are well defined.
    void normalize() {
        for (Cell& c : cells) {
            if (!c.present) c = Cell{};
        }
    }

    bool valid(const AttributeSpace& attrs) const {
        if (cells.size() != static_cast<size_t>(width) * height) return false;
        for (const Cell& c : cells) {
            if (c.shape < 0 || c.shape >= attrs.shapes) return false;
            if (c.color < 0 || c.color >= attrs.colors) return false;
            if (c.size < 0 || c.size >= attrs.sizes) return false;
        }
        return true;
    }

    bool operator==(const Panel&) const = default;
};

// ---------------------------------------------------------------------------
// Rules and puzzles.
// ---------------------------------------------------------------------------

enum class Category { kFluid, kCrystallized, kVisuospatial, kMentalSimulation, kVisualRoutines };
enum class RuleKind { kProgression, kXor, kConstancy, kConceptMembership, kTransformation, kOddOneOut };
enum class Attribute { kShape, kColor, kSize, kCount, kPresence };

constexpr std::array<Category, 5> kAllCategories = {
    Category::kFluid, Category::kCrystallized, Category::kVisuospatial,
    Category::kMentalSimulation, Category::kVisualRoutines};

inline bool rule_kind_legal(Category category, RuleKind kind) {
    switch (category) {
        case Category::kFluid:
            return kind == RuleKind::kProgression || kind == RuleKind::kXor || kind == RuleKind::kConstancy;
        case Category::kCrystallized:
        case Category::kVisuospatial:
            return kind == RuleKind::kConceptMembership;
        case Category::kMentalSimulation:
            return kind == RuleKind::kTransformation;
        case Category::kVisualRoutines:
            return kind == RuleKind::kOddOneOut;
    }
    return false;
}

struct RuleDescriptor {
    Category category = Category::kFluid;
    RuleKind rule_kind = RuleKind::kProgression;
    Attribute attribute = Attribute::kCount;
    std::vector<int> parameters;

    bool operator==(const RuleDescriptor&) const = default;
};

struct Puzzle {
    std::vector<Panel> question_panels;
    std::vector<Panel> option_panels;
    int answer_index = -1;
    RuleDescriptor rule;
    std::vector<int> rationale;  // task-vocabulary tokens; empty before Stage I

    int option_count() const { return static_cast<int>(option_panels.size()); }
    bool operator==(const Puzzle&) const = default;
};

struct DatasetRecord {
    Puzzle puzzle;
    std::string split = "train";
    uint64_t seed = 0;

    bool operator==(const DatasetRecord&) const = default;
};

// ---------------------------------------------------------------------------
// Task vocabulary: a fixed symbol set shared by prompts and rationales.
// Kept under 64 symbols so the trajectory space stays enumerable.
// ---------------------------------------------------------------------------

namespace vocab {

enum Token : int {
    kStep = 0,       // step separator
    kAnswerMarker,   // precedes the predicted option letter
    kEos,            // rationale termination
    kQuery,          // prompt: question marker
    kTarget,         // rationale: derived-target marker
    kCatFluid,
    kCatCrystallized,
    kCatVisuospatial,
    kCatSimulation,
    kCatRoutines,
    kRuleProgression,
    kRuleXor,
    kRuleConstancy,
    kRuleConcept,
    kRuleTransform,
    kRuleOddOneOut,
    kAttrShape,
    kAttrColor,
    kAttrSize,
    kAttrCount,
    kAttrPresence,
    kOpRecolor,
    kOpReflectH,
    kOpReflectV,
    kOpRotate180,
    kOpIdentity,
    kDigit0,  // kDigit0 + d for digit d in 0..9
    kDigit9 = kDigit0 + 9,
    kOptionA,  // kOptionA + k for option k in 0..7
    kOptionH = kOptionA + 7,
    kCount
};

static_assert(kCount <= 64, "task vocabulary must stay enumerable");

inline int digit(int d) {
    if (d < 0 || d > 9) throw std::invalid_argument("vocab::digit: out of range");
    return kDigit0 + d;
}

inline int option(int k) {
    if (k < 0 || k > 7) throw std::invalid_argument("vocab::option: out of range");
    return kOptionA + k;
}

inline bool is_option(int token) { return token >= kOptionA && token <= kOptionH; }
inline int option_index(int token) { return token - kOptionA; }
inline bool is_digit(int token) { return token >= kDigit0 && token <= kDigit9; }

inline int category_token(Category c) {
    switch (c) {
        case Category::kFluid: return kCatFluid;
        case Category::kCrystallized: return kCatCrystallized;
        case Category::kVisuospatial: return kCatVisuospatial;
        case Category::kMentalSimulation: return kCatSimulation;
        case Category::kVisualRoutines: return kCatRoutines;
    }
    throw std::invalid_argument("category_token: bad category");
}

inline int attribute_token(Attribute a) {
    switch (a) {
        case Attribute::kShape: return kAttrShape;
        case Attribute::kColor: return kAttrColor;
        case Attribute::kSize: return kAttrSize;
        case Attribute::kCount: return kAttrCount;
        case Attribute::kPresence: return kAttrPresence;
    }
    throw std::invalid_argument("attribute_token: bad attribute");
}

inline std::string token_name(int t) {
    static const char* fixed[] = {"STEP", "ANS",  "EOS",  "QUERY", "TARGET", "CAT_FLUID",
                                  "CAT_CRYST", "CAT_SPATIAL", "CAT_SIM", "CAT_ROUTINE",
                                  "RULE_PROGRESSION", "RULE_XOR", "RULE_CONSTANCY", "RULE_CONCEPT",
                                  "RULE_TRANSFORM", "RULE_ODD", "ATTR_SHAPE", "ATTR_COLOR",
                                  "ATTR_SIZE", "ATTR_COUNT", "ATTR_PRESENCE", "OP_RECOLOR",
                                  "OP_REFLECT_H", "OP_REFLECT_V", "OP_ROT180", "OP_IDENTITY"};
    if (t >= 0 && t < kDigit0) return fixed[t];
    if (is_digit(t)) return "D" + std::to_string(t - kDigit0);
    if (is_option(t)) return std::string("OPT_") + static_cast<char>('A' + option_index(t));
    return "TOK" + std::to_string(t);
}

}  // namespace vocab

// Enum <-> string mappings used by the dataset format and reports.
inline std::string category_name(Category c) {
    switch (c) {
        case Category::kFluid: return "fluid";
        case Category::kCrystallized: return "crystallized";
        case Category::kVisuospatial: return "visuospatial";
        case Category::kMentalSimulation: return "mental_simulation";
        case Category::kVisualRoutines: return "visual_routines";
    }
    throw std::invalid_argument("category_name: bad category");
}

inline Category category_from(const std::string& s) {
    if (s == "fluid") return Category::kFluid;
    if (s == "crystallized") return Category::kCrystallized;
    if (s == "visuospatial") return Category::kVisuospatial;
    if (s == "mental_simulation") return Category::kMentalSimulation;
    if (s == "visual_routines") return Category::kVisualRoutines;
    throw std::invalid_argument("category_from: unknown category '" + s + "'");
}

inline std::string rule_kind_name(RuleKind k) {
    switch (k) {
        case RuleKind::kProgression: return "progression";
        case RuleKind::kXor: return "xor";
        case RuleKind::kConstancy: return "constancy";
        case RuleKind::kConceptMembership: return "concept_membership";
        case RuleKind::kTransformation: return "transformation";
        case RuleKind::kOddOneOut: return "odd_one_out";
    }
    throw std::invalid_argument("rule_kind_name: bad kind");
}

inline RuleKind rule_kind_from(const std::string& s) {
    if (s == "progression") return RuleKind::kProgression;
    if (s == "xor") return RuleKind::kXor;
    if (s == "constancy") return RuleKind::kConstancy;
    if (s == "concept_membership") return RuleKind::kConceptMembership;
    if (s == "transformation") return RuleKind::kTransformation;
    if (s == "odd_one_out") return RuleKind::kOddOneOut;
    throw std::invalid_argument("rule_kind_from: unknown kind '" + s + "'");
}

inline std::string attribute_name(Attribute a) {
    switch (a) {
        case Attribute::kShape: return "shape";
        case Attribute::kColor: return "color";
        case Attribute::kSize: return "size";
        case Attribute::kCount: return "count";
        case Attribute::kPresence: return "presence";
    }
    throw std::invalid_argument("attribute_name: bad attribute");
}

inline Attribute attribute_from(const std::string& s) {
    if (s == "shape") return Attribute::kShape;
    if (s == "color") return Attribute::kColor;
    if (s == "size") return Attribute::kSize;
    if (s == "count") return Attribute::kCount;
    if (s == "presence") return Attribute::kPresence;
    throw std::invalid_argument("attribute_from: unknown attribute '" + s + "'");
}

}  // namespace cogsense
