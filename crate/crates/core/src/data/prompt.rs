use super::PersonalityProfile;

/// Instruction lines appended after the profile sentences.
pub const PROMPT_INSTRUCTIONS: [&str; 3] = [
    "Please generate a concise, fluent English description summarizing the patient's key personality traits, family environment, and other notable characteristics.",
    "Avoid mentioning depression or related terminology.",
    "Output the response as a single paragraph.",
];

/// Renders the patient prompt used to request a personality description from
/// a language model. One sentence per line.
pub fn build_prompt(p: &PersonalityProfile) -> String {
    let lines = [
        format!("The patient is a {} {} from {}.", p.age, p.gender, p.origin),
        format!("The patient's Extraversion score is {}.", p.extraversion),
        format!("The Agreeableness score is {}.", p.agreeableness),
        format!("The Openness score is {}.", p.openness),
        format!("The Neuroticism score is {}.", p.neuroticism),
        format!("The Conscientiousness score is {}.", p.conscientiousness),
    ];
    lines
        .iter()
        .map(String::as_str)
        .chain(PROMPT_INSTRUCTIONS)
        .collect::<Vec<_>>()
        .join("\n")
}
