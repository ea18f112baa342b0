//! Scoring predictions with each task metric.

use vlm_tts::evalkit::{mcq_extract, relaxed_match, rouge_l, substring_match, vqa_score};

fn main() {
    let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    println!("vqa        {:.3}", vqa_score("two", &s(&["two", "2", "two", "three"])));
    println!("relaxed    {}", relaxed_match("10.4%", &s(&["0.1"])));
    println!("substring  {}", substring_match("x = 3 + 4", &s(&["3+4"]), true));
    println!("mcq        {:?}", mcq_extract("The answer is (C)."));
    println!("rouge-l    {:.3}", rouge_l("a red bus on the road", &s(&["a red bus parked on a road"])));
}
