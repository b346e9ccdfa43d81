use crate::ast::Type;

pub struct Builtin {
    pub name: &'static str,
    pub params: &'static [Type],
    pub ret: Type,
}

pub const BUILTINS: &[Builtin] = &[
    Builtin {
        name: "assert",
        params: &[Type::Bool, Type::Str],
        ret: Type::Void,
    },
    Builtin {
        name: "len",
        params: &[Type::Str],
        ret: Type::Int,
    },
    Builtin {
        name: "char_at",
        params: &[Type::Str, Type::Int],
        ret: Type::Str,
    },
    Builtin {
        name: "to_str",
        params: &[Type::Int],
        ret: Type::Str,
    },
    Builtin {
        name: "abs",
        params: &[Type::Int],
        ret: Type::Int,
    },
];

pub fn builtin_signature(name: &str) -> Option<&'static Builtin> {
    BUILTINS.iter().find(|b| b.name == name)
}
