#pragma once

#include <map>
#include <string>
#include <string_view>

namespace epimem {

// Replaces every "{{$name}}" placeholder. Throws InternalError on an unknown
// placeholder or a missing substitution, so a rendered prompt can never leak
// "{{$" to a model.
std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& vars);

// Step-1 extraction prompt. The two flags select the ablation variants:
// use_categories=false collapses the three category lists into a single flat
// "Personal_Information" list; use_temporal_reasoning=false drops the
// relative-date rules and pins every date to the message date.
std::string step1_template(bool use_categories, bool use_temporal_reasoning);

// Step-2 cross-session reasoning prompt ({{$memory_fragments}}).
std::string step2_template();

// Answer-generation prompts ({{$context}}, {{$question}}).
std::string answer_locomo_template();
std::string answer_longmemeval_template();

// 0-100 grading prompt ({{$question}}, {{$gold_answer}}, {{$predicted_answer}}).
std::string judge_template();

}  // namespace epimem
