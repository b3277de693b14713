//! Fixed word pools for synthetic scenes.

pub const QUESTION_TEMPLATE: [&str; 5] = ["what", "is", "written", "on", "the"];
pub const QUESTION_END: &str = "?";

pub const OBJECT_CLASSES: [&str; 40] = [
    "bottle", "sign", "shirt", "car", "bus", "truck", "door", "window", "poster", "book",
    "can", "box", "cup", "jersey", "billboard", "screen", "phone", "laptop", "clock", "bag",
    "cap", "jacket", "train", "plane", "boat", "banner", "menu", "label", "wall", "table",
    "keyboard", "watch", "remote", "mug", "jar", "ticket", "card", "van", "helmet", "board",
];

pub const OCR_WORDS: [&str; 120] = [
    "coors", "light", "press", "start", "stop", "exit", "open", "sale", "cafe", "taxi",
    "pizza", "hotel", "bank", "police", "metro", "north", "south", "east", "west", "main",
    "street", "avenue", "road", "park", "zone", "fire", "water", "cola", "beer", "wine",
    "coffee", "tea", "milk", "bread", "fresh", "hot", "cold", "new", "old", "free",
    "push", "pull", "enter", "office", "school", "market", "store", "shop", "mall", "center",
    "city", "town", "river", "lake", "hill", "ocean", "sun", "moon", "star", "sky",
    "red", "blue", "green", "gold", "silver", "black", "white", "pink", "orange", "purple",
    "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    "alpha", "beta", "delta", "omega", "sigma", "nova", "zen", "echo", "pixel", "turbo",
    "max", "pro", "ultra", "mini", "plus", "lite", "prime", "royal", "grand", "classic",
    "vintage", "urban", "rapid", "smart", "happy", "lucky", "magic", "super", "mega", "extra",
    "delux", "vista", "terra", "aqua", "solar", "lunar", "polar", "coast", "metal", "stone",
];
