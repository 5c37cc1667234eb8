#include "ragtune/synthetic_corpus.hpp"

#include <fmt/format.h>

#include <array>
#include <numeric>
#include <string_view>

#include "ragtune/rng.hpp"

namespace ragtune {

namespace {

struct Subject {
  std::string_view formal;
  std::array<std::string_view, 2> colloquial;
  std::string_view office;
};

struct Procedure {
  std::string_view formal;
  std::array<std::string_view, 2> colloquial;
  std::string_view trigger;
  std::string_view detail;
};

constexpr std::array<Subject, 20> kSubjects = {{
    {"invention patent", {"big patent for a new gadget", "proper patent on my invention"}, "patent office"},
    {"utility model patent", {"small patent for a tool tweak", "quick patent on a device improvement"}, "patent office"},
    {"design patent", {"protection for how my product looks", "patent on the shape of my product"}, "patent office"},
    {"trademark registration", {"brand name", "shop logo"}, "trademark office"},
    {"copyright registration", {"book I wrote", "song I recorded"}, "copyright protection center"},
    {"software copyright", {"app code", "computer program I built"}, "copyright protection center"},
    {"PCT international application", {"worldwide patent filing", "patent abroad in lots of countries"}, "receiving office"},
    {"divisional application", {"split-off application", "second application carved out of the first one"}, "patent office"},
    {"integrated circuit layout design", {"chip layout", "microchip wiring plan"}, "patent office"},
    {"geographical indication", {"regional product name", "local specialty label"}, "trademark office"},
    {"plant variety right", {"new plant breed", "seed type we bred"}, "plant variety protection office"},
    {"collective trademark", {"association brand", "shared brand for our cooperative"}, "trademark office"},
    {"certification mark", {"quality seal", "stamp that proves quality"}, "trademark office"},
    {"domain name dispute", {"website address fight", "web address someone squatted"}, "dispute resolution center"},
    {"trade secret", {"secret recipe", "confidential know-how"}, "market regulation bureau"},
    {"patent priority claim", {"earlier filing date from abroad", "date from my first filing overseas"}, "patent office"},
    {"utility model conversion", {"switch from small patent to big patent", "change of patent kind"}, "patent office"},
    {"well-known trademark recognition", {"famous brand status", "recognition as a household name"}, "trademark office"},
    {"industrial design international registration", {"product look protection overseas", "Hague route for designs"}, "international bureau"},
    {"patent pledge registration", {"loan secured by my patent", "borrowing money against a patent"}, "patent office"},
}};

constexpr std::array<Procedure, 10> kProcedures = {{
    {"application filing",
     {"sending in the paperwork", "getting the application in"},
     "first disclosure",
     "Claims, description and abstract are examined for formal compliance before publication."},
    {"annual fee payment",
     {"the yearly fee", "paying to keep it alive"},
     "grant anniversary",
     "Late payment within the grace period incurs a surcharge of twenty-five percent per month."},
    {"request for substantive examination",
     {"asking for the full review", "getting it checked properly"},
     "filing date",
     "The examiner assesses novelty, inventive step and industrial applicability."},
    {"invalidation declaration request",
     {"knocking out a rival's right", "challenging someone else's registration"},
     "publication of grant",
     "The petitioner states the statutory grounds and submits evidence of prior disclosure."},
    {"assignment recordal",
     {"selling it to another company", "handing ownership over"},
     "signature of the assignment contract",
     "The transfer takes effect against third parties only from the date of recordal."},
    {"extension of time limit",
     {"getting more time", "asking for a deadline delay"},
     "original deadline",
     "Extensions are granted once and require a written statement of justified reasons."},
    {"correction of bibliographic data",
     {"fixing a typo in my details", "changing the address on file"},
     "change of circumstances",
     "Amendments cover applicant name, nationality, address and agency information."},
    {"restoration of rights",
     {"getting it back after missing a deadline", "reviving something that lapsed"},
     "notification of loss of rights",
     "Restoration is available where the failure occurred despite all due care."},
    {"license contract recordation",
     {"letting another firm use it", "writing down a licensing deal officially"},
     "conclusion of the license contract",
     "Exclusive, sole and ordinary licenses are entered in the register with their territorial scope."},
    {"fee reduction request",
     {"paying less in official charges", "getting a discount on charges"},
     "filing date",
     "Natural persons and small enterprises qualify upon certification of annual income."},
}};

constexpr std::array<std::string_view, 8> kQuestionFrames = {
    "How does {p} work for a {s}?",
    "What are the rules about {p} for my {s}?",
    "Who do I talk to about {p} when it comes to a {s}?",
    "{c}, how do I go about {p} for the {s}?",
    "Can someone explain {p} for a {s} in plain words?",
    "{c} and I keep hearing about {p}, what happens with a {s}?",
    "Is {p} for a {s} expensive and how long does it take?",
    "What should I prepare before {p} for my {s}?",
};

constexpr std::array<std::string_view, 10> kContexts = {
    "I run a small bakery",      "Our startup is two people",   "I am a university researcher",
    "We are a family workshop",  "I work at a design studio",   "Our cooperative sells tea",
    "I am an independent maker", "My company imports machines", "We just got funding",
    "I teach at a vocational school",
};

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  for (std::size_t pos = 0; (pos = s.find(from, pos)) != std::string::npos; pos += to.size())
    s.replace(pos, from.size(), to);
  return s;
}

std::string capitalize(std::string s) {
  if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 'a' + 'A');
  return s;
}

}  // namespace

Corpus make_synthetic_corpus(std::size_t n, std::uint64_t seed) {
  constexpr std::size_t kCombos = kSubjects.size() * kProcedures.size();
  Rng rng(seed);
  std::vector<std::size_t> combos(kCombos);
  std::iota(combos.begin(), combos.end(), std::size_t{0});
  rng.shuffle(combos);

  std::vector<QAPair> entries;
  entries.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng item(derive_seed(seed, static_cast<std::uint64_t>(i)));
    const auto& subject = kSubjects[combos[i % kCombos] / kProcedures.size()];
    const auto& proc = kProcedures[combos[i % kCombos] % kProcedures.size()];

    const bool formal_subject = item.uniform01() < 0.5;
    const bool formal_proc = item.uniform01() < 0.5;
    const std::string s(formal_subject ? subject.formal : subject.colloquial[item.below(2)]);
    const std::string p(formal_proc ? proc.formal : proc.colloquial[item.below(2)]);
    const std::string c(kContexts[item.below(kContexts.size())]);
    std::string question(kQuestionFrames[item.below(kQuestionFrames.size())]);
    question = replace_all(std::move(question), "{s}", s);
    question = replace_all(std::move(question), "{p}", p);
    question = capitalize(replace_all(std::move(question), "{c}", c));

    const auto months = 2 + item.below(22);
    const auto fee = 50 * (2 + item.below(60));
    const auto weeks = 3 + item.below(30);
    const auto form = fmt::format("{}{:03d}", static_cast<char>('A' + item.below(26)), item.below(1000));
    std::string answer = fmt::format(
        "{} for a {} is handled by the competent {}. The applicant submits form {} together with the supporting "
        "documents within {} months of the {}. The official fee amounts to {} yuan and the processing period is "
        "normally {} weeks. {}",
        capitalize(std::string(proc.formal)), subject.formal, subject.office, form, months, proc.trigger, fee, weeks,
        proc.detail);

    QAPair qa;
    qa.id = fmt::format("ipfaq-{:04d}", i + 1);
    qa.question = std::move(question);
    qa.answer = std::move(answer);
    qa.metadata = {{"subject", std::string(subject.formal)},
                   {"procedure", std::string(proc.formal)},
                   {"source", "synthetic"}};
    entries.push_back(std::move(qa));
  }
  return Corpus("synthetic_corpus", std::move(entries));
}

}  // namespace ragtune
