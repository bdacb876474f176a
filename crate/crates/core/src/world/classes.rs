//! Object-class table. Every capability flag in the world is read from here.

use serde::{Deserialize, Serialize};

/// Height band an object is found at. Decides which pitch sees it up close.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Elevation {
    Low,
    Mid,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Capabilities {
    pub is_receptacle: bool,
    pub is_openable: bool,
    pub is_toggleable: bool,
    pub is_sliceable: bool,
    pub can_heat: bool,
    pub can_cool: bool,
    pub can_clean: bool,
    pub is_pickupable: bool,
}

macro_rules! object_classes {
    ($($variant:ident => [$($name:literal),+], $elev:ident, {$($cap:ident),*};)+) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum ObjectClass {
            $($variant,)+
        }

        impl ObjectClass {
            pub const ALL: &'static [ObjectClass] = &[$(ObjectClass::$variant,)+];

            /// Surface forms used in instructions; the first one is canonical.
            pub fn names(self) -> &'static [&'static str] {
                match self {
                    $(ObjectClass::$variant => &[$($name),+],)+
                }
            }

            pub fn elevation(self) -> Elevation {
                match self {
                    $(ObjectClass::$variant => Elevation::$elev,)+
                }
            }

            pub fn capabilities(self) -> Capabilities {
                match self {
                    $(ObjectClass::$variant => Capabilities { $($cap: true,)* ..Capabilities::default() },)+
                }
            }
        }
    };
}

object_classes! {
    CounterTop => ["counter", "countertop", "kitchen counter"], Mid, {is_receptacle};
    DiningTable => ["dining table", "table"], Mid, {is_receptacle};
    SideTable => ["side table", "end table"], Mid, {is_receptacle};
    TvStand => ["tv stand", "television stand"], Mid, {is_receptacle};
    CoffeeTable => ["coffee table", "low table"], Low, {is_receptacle};
    Shelf => ["shelf", "wall shelf"], High, {is_receptacle};
    GarbageCan => ["garbage can", "garbage bin", "trash can"], Low, {is_receptacle};
    Cabinet => ["cabinet", "cupboard"], Low, {is_receptacle, is_openable};
    Fridge => ["fridge", "refrigerator"], Mid, {is_receptacle, is_openable};
    Microwave => ["microwave", "microwave oven"], Mid, {is_receptacle, is_openable, is_toggleable};
    SinkBasin => ["sink", "sink basin"], Mid, {is_receptacle};
    Faucet => ["faucet", "tap"], Mid, {is_toggleable};
    DeskLamp => ["desk lamp", "lamp"], Mid, {is_toggleable};
    Bowl => ["bowl"], Mid, {is_receptacle, is_pickupable, can_heat, can_cool, can_clean};
    Plate => ["plate", "dish"], Mid, {is_receptacle, is_pickupable, can_heat, can_cool, can_clean};
    Mug => ["mug", "coffee mug"], Mid, {is_pickupable, can_heat, can_cool, can_clean};
    Cup => ["cup", "glass"], Mid, {is_pickupable, can_heat, can_cool, can_clean};
    Apple => ["apple"], Mid, {is_pickupable, is_sliceable, can_heat, can_cool, can_clean};
    Potato => ["potato"], Mid, {is_pickupable, is_sliceable, can_heat, can_cool, can_clean};
    Tomato => ["tomato"], Mid, {is_pickupable, is_sliceable, can_heat, can_cool, can_clean};
    Bread => ["bread", "loaf of bread"], Mid, {is_pickupable, is_sliceable, can_heat, can_cool};
    Lettuce => ["lettuce", "head of lettuce"], Mid, {is_pickupable, is_sliceable, can_cool, can_clean};
    Egg => ["egg"], Mid, {is_pickupable, can_heat, can_cool, can_clean};
    Knife => ["knife", "butter knife"], Mid, {is_pickupable, can_clean};
    Spoon => ["spoon"], Mid, {is_pickupable, can_clean};
    CreditCard => ["credit card", "card"], Mid, {is_pickupable};
    Book => ["book"], Mid, {is_pickupable};
    Pen => ["pen"], Mid, {is_pickupable};
    KeyChain => ["key chain", "keys"], Mid, {is_pickupable};
    RemoteControl => ["remote control", "remote"], Mid, {is_pickupable};
    CellPhone => ["cell phone", "phone"], Mid, {is_pickupable};
    Watch => ["watch", "wristwatch"], Mid, {is_pickupable};
}

/// Number of object classes (N_objects).
pub const NUM_CLASSES: usize = ObjectClass::ALL.len();

impl ObjectClass {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<ObjectClass> {
        Self::ALL.get(index).copied()
    }

    pub fn canonical_name(self) -> &'static str {
        self.names()[0]
    }

    /// Non-pickupable objects occupy their cell.
    pub fn is_fixture(self) -> bool {
        !self.capabilities().is_pickupable
    }

    /// Receptacles small objects start on and are placed onto in tasks.
    pub fn is_surface(self) -> bool {
        matches!(
            self,
            ObjectClass::CounterTop
                | ObjectClass::DiningTable
                | ObjectClass::SideTable
                | ObjectClass::TvStand
                | ObjectClass::CoffeeTable
                | ObjectClass::Shelf
                | ObjectClass::GarbageCan
        )
    }

    pub fn is_movable_container(self) -> bool {
        let caps = self.capabilities();
        caps.is_receptacle && caps.is_pickupable
    }
}

impl std::fmt::Display for ObjectClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}", self)
    }
}

impl std::str::FromStr for ObjectClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ObjectClass::ALL
            .iter()
            .copied()
            .find(|c| format!("{:?}", c).eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown object class `{s}`"))
    }
}
